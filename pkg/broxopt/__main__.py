import sys

from broxopt.cli import main

sys.exit(main())
