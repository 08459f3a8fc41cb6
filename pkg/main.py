"""
LHM desk
========
Run: python main.py <command> [flags]      (python main.py --help)
"""
from cli.app import main

if __name__ == "__main__":
    raise SystemExit(main())
