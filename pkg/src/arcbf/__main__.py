import sys

from arcbf.cli import main

sys.exit(main())
