import sys

from trendlab.cli import main

sys.exit(main())
