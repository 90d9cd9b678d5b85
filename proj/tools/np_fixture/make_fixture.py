#!/usr/bin/env python3
"""Train a small latent neural process on Beta CDFs and export its decoder.

This is a lightweight stand-in used to regenerate the committed test fixture
(tests/fixtures/np_decoder.json). The exported decoder takes a scalar target
input x and a standard-normal latent z; the context representation and the
latent posterior (mean, diagonal scale) are folded into the first layer.

    python3 tools/np_fixture/make_fixture.py --out tests/fixtures/np_decoder.json
"""

import argparse
import json
import pathlib

import numpy as np
import torch
from scipy.special import betainc
from torch import nn


def sample_tasks(rng, batch, n_ctx_range, n_tgt, shape_range):
    p = rng.uniform(*shape_range, size=batch)
    q = rng.uniform(*shape_range, size=batch)
    n_ctx = rng.integers(n_ctx_range[0], n_ctx_range[1] + 1)
    xc = rng.uniform(0.0, 1.0, size=(batch, n_ctx))
    xt = rng.uniform(0.0, 1.0, size=(batch, n_tgt))
    yc = betainc(p[:, None], q[:, None], xc)
    yt = betainc(p[:, None], q[:, None], xt)
    t = lambda a: torch.tensor(a, dtype=torch.float32).unsqueeze(-1)
    return t(xc), t(yc), t(xt), t(yt)


def mlp(sizes):
    layers = []
    for i in range(len(sizes) - 1):
        layers.append(nn.Linear(sizes[i], sizes[i + 1]))
        if i + 2 < len(sizes):
            layers.append(nn.ReLU())
    return nn.Sequential(*layers)


class NeuralProcess(nn.Module):
    def __init__(self, r_dim, z_dim, hidden):
        super().__init__()
        self.det_encoder = mlp([2, 64, 64, r_dim])
        self.lat_encoder = mlp([2, 64, 64])
        self.lat_mu = nn.Linear(64, z_dim)
        self.lat_logsig = nn.Linear(64, z_dim)
        self.decoder = mlp([1 + r_dim + z_dim] + hidden + [1])
        self.r_dim = r_dim
        self.z_dim = z_dim

    def latent(self, x, y):
        h = self.lat_encoder(torch.cat([x, y], -1)).mean(-2)
        return self.lat_mu(h), 0.005 + 0.995 * torch.sigmoid(self.lat_logsig(h))

    def deterministic(self, x, y):
        return self.det_encoder(torch.cat([x, y], -1)).mean(-2)

    def decode(self, xt, r, z):
        n = xt.shape[-2]
        r = r.unsqueeze(-2).expand(*r.shape[:-1], n, r.shape[-1])
        z = z.unsqueeze(-2).expand(*z.shape[:-1], n, z.shape[-1])
        return self.decoder(torch.cat([xt, r, z], -1))


def kl_diag(mu_q, sig_q, mu_p, sig_p):
    return (torch.log(sig_p / sig_q) + (sig_q**2 + (mu_q - mu_p) ** 2) / (2 * sig_p**2) - 0.5).sum(-1)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="tests/fixtures/np_decoder.json")
    ap.add_argument("--steps", type=int, default=6000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--z-dim", type=int, default=2)
    ap.add_argument("--r-dim", type=int, default=8)
    args = ap.parse_args()

    cfg = {
        "hidden": [64, 64, 64],
        "z_dim": args.z_dim,
        "r_dim": args.r_dim,
        "context_size_range": [3, 10],
        "targets_per_task": 20,
        "beta_shape_range": [0.5, 5.0],
        "obs_noise": 0.05,
        "batch": 32,
        "lr": 1e-3,
        "steps": args.steps,
        "seed": args.seed,
    }
    torch.manual_seed(args.seed)
    rng = np.random.default_rng(args.seed)
    model = NeuralProcess(cfg["r_dim"], cfg["z_dim"], cfg["hidden"])
    opt = torch.optim.Adam(model.parameters(), lr=cfg["lr"])

    for step in range(cfg["steps"]):
        xc, yc, xt, yt = sample_tasks(rng, cfg["batch"], cfg["context_size_range"],
                                      cfg["targets_per_task"], cfg["beta_shape_range"])
        xa, ya = torch.cat([xc, xt], -2), torch.cat([yc, yt], -2)
        mu_c, sig_c = model.latent(xc, yc)
        mu_a, sig_a = model.latent(xa, ya)
        z = mu_a + sig_a * torch.randn_like(sig_a)
        pred = model.decode(xt, model.deterministic(xc, yc), z)
        nll = ((pred - yt) ** 2).sum((-1, -2)) / (2 * cfg["obs_noise"] ** 2)
        loss = (nll + kl_diag(mu_a, sig_a, mu_c, sig_c)).mean() / cfg["targets_per_task"]
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % 500 == 0:
            print(f"step {step} loss {loss.item():.4f}", flush=True)

    # Held-out predictive error, z drawn from the context posterior.
    with torch.no_grad():
        xc, yc, xt, yt = sample_tasks(rng, 512, cfg["context_size_range"],
                                      cfg["targets_per_task"], cfg["beta_shape_range"])
        mu_c, sig_c = model.latent(xc, yc)
        z = mu_c + sig_c * torch.randn_like(sig_c)
        mse = ((model.decode(xt, model.deterministic(xc, yc), z) - yt) ** 2).mean().item()
    print(f"held-out mse {mse:.5f}")

    # Fixed context set from an unseen CDF.
    ctx_p, ctx_q = 2.0, 3.5
    ctx_x = np.array([0.08, 0.21, 0.37, 0.55, 0.72, 0.9])
    ctx_y = betainc(ctx_p, ctx_q, ctx_x)

    model = model.double()
    with torch.no_grad():
        cx = torch.tensor(ctx_x).view(1, -1, 1)
        cy = torch.tensor(ctx_y).view(1, -1, 1)
        r = model.deterministic(cx, cy)[0]
        mu, sig = model.latent(cx, cy)
        mu, sig = mu[0], sig[0]

        linears = [m for m in model.decoder if isinstance(m, nn.Linear)]
        first = linears[0]
        w = first.weight.detach()
        wx = w[:, :1]
        wr = w[:, 1:1 + cfg["r_dim"]]
        wz = w[:, 1 + cfg["r_dim"]:]
        w0 = torch.cat([wx, wz * sig.unsqueeze(0)], 1)
        b0 = first.bias.detach() + wr @ r + wz @ mu

        layers = [{"type": "linear", "W": w0.tolist(), "b": b0.tolist()}]
        for lin in linears[1:]:
            layers.append({"type": "relu"})
            layers.append({"type": "linear", "W": lin.weight.detach().tolist(),
                           "b": lin.bias.detach().tolist()})

        samples = []
        srng = np.random.default_rng(args.seed + 1)
        for _ in range(5):
            x = float(srng.uniform(0, 1))
            zt = srng.standard_normal(cfg["z_dim"])
            z = mu + sig * torch.tensor(zt)
            y = model.decode(torch.tensor([[x]]), r, z)[0, 0].item()
            samples.append({"x": [x], "z": zt.tolist(), "f": [y]})

    out = pathlib.Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps({"x_dim": 1, "z_dim": cfg["z_dim"], "layers": layers}, indent=1))
    meta = {
        "train_config": cfg,
        "held_out_mse": mse,
        "context": {"x": ctx_x.tolist(), "y": ctx_y.tolist(), "beta_p": ctx_p, "beta_q": ctx_q},
        "latent_posterior": {"mu": mu.tolist(), "sigma": sig.tolist()},
        "forward_samples": samples,
    }
    out.with_suffix(".meta.json").write_text(json.dumps(meta, indent=1))
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
