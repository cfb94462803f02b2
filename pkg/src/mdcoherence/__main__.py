import sys

from mdcoherence.cli import main

sys.exit(main())
