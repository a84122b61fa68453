import sys

from python_rotkit.cli import main

sys.exit(main())
