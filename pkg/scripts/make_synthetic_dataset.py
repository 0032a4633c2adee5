"""Write a small PGM dataset with a manifest, for trying the CLI without face data."""

import argparse

from lccr.synthetic import write_image_dataset


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("root")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--height", type=int, default=24)
    p.add_argument("--width", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args()
    path = write_image_dataset(a.root, a.classes, a.per_class, (a.height, a.width), a.seed)
    print(path)


if __name__ == "__main__":
    main()
