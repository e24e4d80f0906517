# Subcommands, discovered by snn.py. Each module exposes setup(subparsers).
