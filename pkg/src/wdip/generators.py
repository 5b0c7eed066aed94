"""Deep-image-prior generators.

``ImageGenerator`` is a multi-scale encoder-decoder with skip connections
ending in a sigmoid; ``KernelGenerator`` is a one-hidden-layer MLP ending in
a softmax over the ``n * n`` kernel entries. Both are fed frozen uniform
noise drawn once from the run seed.
"""

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .exceptions import DimensionError


@dataclass(frozen=True)
class Architecture:
    scales: int = 5
    channels: int = 128
    skip_channels: int = 16
    input_depth: int = 32
    latent_dim: int = 200
    hidden: int = 1000


PROFILES = {
    "reference": Architecture(),
    "desk": Architecture(scales=4, channels=32, skip_channels=8, input_depth=8),
    "miniature": Architecture(scales=2, channels=16, skip_channels=4, input_depth=8, latent_dim=32, hidden=128),
}


def get_architecture(profile):
    if isinstance(profile, Architecture):
        return profile
    if isinstance(profile, dict):
        return Architecture(**profile)
    try:
        return PROFILES[profile]
    except KeyError:
        raise ValueError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}") from None


def _conv(cin, cout, size, stride=1):
    layers = []
    if size > 1:
        layers.append(nn.ReflectionPad2d(size // 2))
    layers += [nn.Conv2d(cin, cout, size, stride), nn.BatchNorm2d(cout), nn.LeakyReLU(0.2)]
    return nn.Sequential(*layers)


class ImageGenerator(nn.Module):
    def __init__(self, arch, out_channels=1):
        super().__init__()
        c, s = arch.channels, arch.skip_channels
        self.skips = nn.ModuleList()
        self.downs = nn.ModuleList()
        self.ups = nn.ModuleList()
        cin = arch.input_depth
        for _ in range(arch.scales):
            self.skips.append(_conv(cin, s, 1))
            self.downs.append(nn.Sequential(_conv(cin, c, 3, stride=2), _conv(c, c, 3)))
            self.ups.append(nn.Sequential(nn.BatchNorm2d(c + s), _conv(c + s, c, 3), _conv(c, c, 1)))
            cin = c
        self.head = nn.Conv2d(c, out_channels, 1)

    def forward(self, z):
        skipped = []
        x = z
        for skip, down in zip(self.skips, self.downs):
            skipped.append(skip(x))
            x = down(x)
        for up, s in zip(reversed(self.ups), reversed(skipped)):
            x = F.interpolate(x, size=s.shape[-2:], mode="bilinear", align_corners=False)
            x = up(torch.cat([s, x], dim=1))
        return torch.sigmoid(self.head(x))


class KernelGenerator(nn.Module):
    def __init__(self, arch, kernel_size):
        super().__init__()
        self.kernel_size = kernel_size
        self.body = nn.Sequential(
            nn.Linear(arch.latent_dim, arch.hidden),
            nn.ReLU6(),
            nn.Linear(arch.hidden, kernel_size * kernel_size),
        )

    def forward(self, z):
        n = self.kernel_size
        return torch.softmax(self.body(z), dim=-1).reshape(n, n)


@dataclass
class LatentInputs:
    z_image: torch.Tensor
    z_kernel: torch.Tensor
    seed: int

    @classmethod
    def sample(cls, shape, arch, seed, dtype=torch.float32):
        gen = torch.Generator().manual_seed(int(seed) + 0x5EED)
        h, w = shape
        z_i = torch.rand(1, arch.input_depth, h, w, generator=gen, dtype=dtype)
        z_k = torch.rand(arch.latent_dim, generator=gen, dtype=dtype)
        return cls(z_i, z_k, int(seed))


class GeneratorState:
    """Both networks, their frozen latents and the architecture record."""

    def __init__(self, shape, kernel_size, profile="reference", seed=0, dtype=torch.float32):
        if kernel_size % 2 == 0:
            raise DimensionError("kernel size must be odd")
        self.shape = tuple(int(v) for v in shape)
        self.kernel_size = int(kernel_size)
        self.arch = get_architecture(profile)
        self.seed = int(seed)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(self.seed)
            self.image_net = ImageGenerator(self.arch).to(dtype)
            self.kernel_net = KernelGenerator(self.arch, self.kernel_size).to(dtype)
        self.latents = LatentInputs.sample(self.shape, self.arch, self.seed, dtype=dtype)

    def parameters(self):
        return list(self.image_net.parameters()) + list(self.kernel_net.parameters())

    def image(self):
        return image_generator_forward(self, self.latents)

    def kernel(self):
        return kernel_generator_forward(self, self.latents)

    def descriptor(self):
        return {"shape": list(self.shape), "kernel_size": self.kernel_size,
                "seed": self.seed, "arch": asdict(self.arch)}

    def state_dict(self):
        return {"image_net": self.image_net.state_dict(), "kernel_net": self.kernel_net.state_dict(),
                "z_image": self.latents.z_image, "z_kernel": self.latents.z_kernel,
                "descriptor": self.descriptor()}

    def load_state_dict(self, state):
        self.image_net.load_state_dict(state["image_net"])
        self.kernel_net.load_state_dict(state["kernel_net"])
        self.latents = LatentInputs(state["z_image"].clone(), state["z_kernel"].clone(), self.seed)

    @classmethod
    def from_state_dict(cls, state):
        d = state["descriptor"]
        obj = cls(d["shape"], d["kernel_size"], Architecture(**d["arch"]), d["seed"],
                  dtype=state["z_image"].dtype)
        obj.load_state_dict(state)
        return obj


def image_generator_forward(state, latents):
    """``f_theta(z_I)`` as an H x W tensor in (0, 1)."""
    z = latents.z_image
    if tuple(z.shape[-2:]) != state.shape:
        raise DimensionError(f"latent grid {tuple(z.shape[-2:])} does not match output {state.shape}")
    return state.image_net(z)[0, 0]


def kernel_generator_forward(state, latents):
    """``g_phi(z_k)`` as an n x n tensor on the probability simplex."""
    return state.kernel_net(latents.z_kernel)
