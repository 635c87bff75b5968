"""Standalone exporter CLI: `spa-bridge export` and `spa-bridge convert`."""
import argparse
import sys

from .annotations import ConvertError, convert_annotations
from .export import ExportError, export_features


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="spa-bridge", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    exp = sub.add_parser("export", help="export backbone activations as SPT tensors")
    exp.add_argument("--model", required=True, help="backbone id (vgg16, resnet18)")
    exp.add_argument("--images", required=True, help="directory of input images")
    exp.add_argument("--layers", required=True, help="comma list, e.g. stage4,stage5 or layer3,layer4")
    exp.add_argument("--out", required=True, help="output directory")
    exp.add_argument("--pretrained", action=argparse.BooleanOptionalAction, default=True,
                     help="use published weights (--no-pretrained: seeded random init)")
    exp.add_argument("--seed", type=int, default=0, help="weight seed when not pretrained")

    conv = sub.add_parser("convert", help="convert annotations to the eval JSON schema")
    conv.add_argument("--format", required=True, choices=["csv-xywh", "json-xywh"])
    conv.add_argument("--src", required=True)
    conv.add_argument("--out", required=True)

    args = ap.parse_args(argv)
    try:
        if args.command == "export":
            layers = [l for l in args.layers.split(",") if l]
            manifest = export_features(args.model, args.images, layers, args.out,
                                       pretrained=args.pretrained, seed=args.seed)
            print(f"exported {len(manifest.images)} image(s) x {len(layers)} layer(s) "
                  f"to {args.out} [{manifest.weights}]")
        else:
            n = convert_annotations(args.format, args.src, args.out)
            print(f"converted {n} record(s) to {args.out}")
    except (ExportError, ConvertError, OSError) as exc:
        print(f"spa-bridge: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
