import sys

from mlwalk.cli import main

sys.exit(main())
