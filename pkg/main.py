import sys

from fractalsym.cli import run


def main():
    """Run the fsa command line from a source checkout"""
    sys.exit(run())


if __name__ == "__main__":
    main()
