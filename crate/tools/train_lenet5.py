"""Train a LeNet-5 on the MNIST digits bundled with the npm `mnist` package.

Produces the fixtures under data/:
  data/mnist-1k/t1k-images-idx3-ubyte   1000 held-out test images (IDX)
  data/mnist-1k/t1k-labels-idx1-ubyte   their labels (IDX)
  data/mnist-1k/calib-images-idx3-ubyte 200 training images for activation calibration
  data/mnist-1k/calib-labels-idx1-ubyte
  data/lenet5/manifest.toml + *.f32      weights (raw little-endian float32)

Usage:
  npm pack mnist && tar xzf mnist-1.1.0.tgz
  python3 tools/train_lenet5.py --digits package/src/digits --out data

Inputs are mapped to [-1, 1] with v = 2 * pixel / 255 - 1 and padded to 32x32 with
the background value, which is how the simulator feeds them.
"""
import argparse
import json
import os
import struct

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


def load_digits(path):
    images, labels = [], []
    for d in range(10):
        with open(os.path.join(path, f"{d}.json")) as f:
            data = np.array(json.load(f)["data"], dtype=np.float64)
        px = np.clip(np.round(data * 255.0), 0, 255).astype(np.uint8).reshape(-1, 28, 28)
        images.append(px)
        labels.append(np.full(len(px), d, dtype=np.uint8))
    return np.concatenate(images), np.concatenate(labels)


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def to_input(px):
    x = torch.tensor(px, dtype=torch.float32) * (2.0 / 255.0) - 1.0
    return F.pad(x.unsqueeze(1), (2, 2, 2, 2), value=-1.0)


class LeNet5(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 6, 5)
        self.conv2 = nn.Conv2d(6, 16, 5)
        self.fc1 = nn.Linear(400, 120)
        self.fc2 = nn.Linear(120, 84)
        self.fc3 = nn.Linear(84, 10)

    def forward(self, x):
        x = F.max_pool2d(F.relu(self.conv1(x)), 2)
        x = F.max_pool2d(F.relu(self.conv2(x)), 2)
        x = x.flatten(1)
        x = F.relu(self.fc1(x))
        x = F.relu(self.fc2(x))
        return self.fc3(x)


def augment(x, gen):
    # random affine jitter: +-2 px shift, +-10 deg rotation, +-10% scale
    n = x.shape[0]
    ang = (torch.rand(n, generator=gen) - 0.5) * (20.0 * np.pi / 180.0)
    sc = 1.0 + (torch.rand(n, generator=gen) - 0.5) * 0.2
    tx = (torch.rand(n, generator=gen) - 0.5) * (4.0 / 16.0)
    ty = (torch.rand(n, generator=gen) - 0.5) * (4.0 / 16.0)
    cos, sin = torch.cos(ang) / sc, torch.sin(ang) / sc
    theta = torch.stack(
        [torch.stack([cos, -sin, tx], 1), torch.stack([sin, cos, ty], 1)], 1
    )
    grid = F.affine_grid(theta, x.shape, align_corners=False)
    # sample on (x + 1) so the padding value is the background (-1)
    return F.grid_sample(x + 1.0, grid, align_corners=False, padding_mode="zeros") - 1.0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--digits", required=True)
    ap.add_argument("--out", default="data")
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    rng = np.random.default_rng(args.seed)
    images, labels = load_digits(args.digits)
    perm = rng.permutation(len(images))
    test_idx, train_idx = perm[:1000], perm[1000:]

    mnist_dir = os.path.join(args.out, "mnist-1k")
    os.makedirs(mnist_dir, exist_ok=True)
    write_idx_images(os.path.join(mnist_dir, "t1k-images-idx3-ubyte"), images[test_idx])
    write_idx_labels(os.path.join(mnist_dir, "t1k-labels-idx1-ubyte"), labels[test_idx])
    write_idx_images(os.path.join(mnist_dir, "calib-images-idx3-ubyte"), images[train_idx[:200]])
    write_idx_labels(os.path.join(mnist_dir, "calib-labels-idx1-ubyte"), labels[train_idx[:200]])

    xtr, ytr = to_input(images[train_idx]), torch.tensor(labels[train_idx], dtype=torch.long)
    xte, yte = to_input(images[test_idx]), torch.tensor(labels[test_idx], dtype=torch.long)

    model = LeNet5()
    opt = torch.optim.Adam(model.parameters(), lr=1e-3, weight_decay=1e-4)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, args.epochs)
    gen = torch.Generator().manual_seed(args.seed)
    for epoch in range(args.epochs):
        model.train()
        order = torch.randperm(len(xtr), generator=gen)
        for i in range(0, len(order), 64):
            b = order[i : i + 64]
            xb = augment(xtr[b], gen)
            loss = F.cross_entropy(model(xb), ytr[b])
            opt.zero_grad()
            loss.backward()
            opt.step()
        sched.step()
        model.eval()
        with torch.no_grad():
            acc = (model(xte).argmax(1) == yte).float().mean().item()
        print(f"epoch {epoch + 1:3d}  loss {loss.item():.4f}  test acc {acc * 100:.2f}%")

    wdir = os.path.join(args.out, "lenet5")
    os.makedirs(wdir, exist_ok=True)
    tensors = {}
    for name, p in model.state_dict().items():
        fname = name + ".f32"
        p.detach().numpy().astype("<f4").tofile(os.path.join(wdir, fname))
        tensors[name] = fname
    with open(os.path.join(wdir, "manifest.toml"), "w") as f:
        f.write("version = 1\ninput_shape = [1, 32, 32]\n")
        layers = [
            ("conv", "conv1", dict(in_channels=1, out_channels=6, kernel=5, stride=1)),
            ("pool", None, dict(kernel=2, stride=2, mode="max")),
            ("conv", "conv2", dict(in_channels=6, out_channels=16, kernel=5, stride=1)),
            ("pool", None, dict(kernel=2, stride=2, mode="max")),
            ("fc", "fc1", dict(inputs=400, outputs=120)),
            ("fc", "fc2", dict(inputs=120, outputs=84)),
            ("fc", "fc3", dict(inputs=84, outputs=10)),
        ]
        for kind, name, params in layers:
            f.write(f"\n[[layer]]\nkind = \"{kind}\"\n")
            for k, v in params.items():
                f.write(f"{k} = \"{v}\"\n" if isinstance(v, str) else f"{k} = {v}\n")
            if name:
                f.write(f"weights = \"{tensors[name + '.weight']}\"\n")
                f.write(f"bias = \"{tensors[name + '.bias']}\"\n")
    model.eval()
    with torch.no_grad():
        acc = (model(xte).argmax(1) == yte).float().mean().item()
    print(f"final float accuracy on the 1000-image test subset: {acc * 100:.2f}%")


if __name__ == "__main__":
    main()
