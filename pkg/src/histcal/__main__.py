import sys

from histcal.cli import main

sys.exit(main())
