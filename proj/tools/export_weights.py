#!/usr/bin/env python3
"""Export the pretrained torchvision networks used by sgen to safetensors.

Writes vgg19.safetensors (the convolutional trunk, used by the perceptual
loss) and inception_sifid.safetensors (the first InceptionV3 block, used by
SIFID) into the output directory. Point SGEN_WEIGHTS_DIR at that directory.

Requires torch, torchvision and safetensors:
    pip install torch torchvision safetensors
"""

import argparse
import pathlib

# torchvision `features` indices of the 12 convolutions before the fourth pool.
VGG_CONVS = [0, 2, 5, 7, 10, 12, 14, 16, 19, 21, 23, 25]
INCEPTION_CONVS = ["Conv2d_1a_3x3", "Conv2d_2a_3x3", "Conv2d_2b_3x3"]
BN_FIELDS = ["weight", "bias", "running_mean", "running_var"]


def export_vgg(out: pathlib.Path) -> None:
    import torchvision
    from safetensors.torch import save_file

    net = torchvision.models.vgg19(weights=torchvision.models.VGG19_Weights.IMAGENET1K_V1)
    tensors = {}
    for i in VGG_CONVS:
        conv = net.features[i]
        tensors[f"features.{i}.weight"] = conv.weight.detach().float().contiguous()
        tensors[f"features.{i}.bias"] = conv.bias.detach().float().contiguous()
    save_file(tensors, str(out / "vgg19.safetensors"))


def export_inception(out: pathlib.Path) -> None:
    import torchvision
    from safetensors.torch import save_file

    net = torchvision.models.inception_v3(weights=torchvision.models.Inception_V3_Weights.IMAGENET1K_V1,
                                          aux_logits=True)
    tensors = {}
    for name in INCEPTION_CONVS:
        block = getattr(net, name)
        tensors[f"{name}.conv.weight"] = block.conv.weight.detach().float().contiguous()
        for field in BN_FIELDS:
            tensors[f"{name}.bn.{field}"] = getattr(block.bn, field).detach().float().contiguous()
    save_file(tensors, str(out / "inception_sifid.safetensors"))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("out", type=pathlib.Path, help="output directory")
    parser.add_argument("--only", choices=["vgg", "inception"], help="export a single network")
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    if args.only in (None, "vgg"):
        export_vgg(args.out)
    if args.only in (None, "inception"):
        export_inception(args.out)
    print(f"wrote weights to {args.out}; export SGEN_WEIGHTS_DIR={args.out.resolve()}")


if __name__ == "__main__":
    main()
