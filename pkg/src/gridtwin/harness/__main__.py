import sys

from gridtwin.harness.cli import main

sys.exit(main())
