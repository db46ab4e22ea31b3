import sys

from moregin.cli import main

sys.exit(main())
