import sys

from fsbp.cli import main

sys.exit(main())
