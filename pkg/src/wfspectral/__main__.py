import sys

from wfspectral.cli import main

sys.exit(main())
