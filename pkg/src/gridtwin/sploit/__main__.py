import sys

from gridtwin.sploit.cli import main

sys.exit(main())
