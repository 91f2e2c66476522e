import sys

from radt.cli import main


sys.exit(main())
