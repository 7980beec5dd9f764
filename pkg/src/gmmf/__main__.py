import sys

from gmmf.cli import main

sys.exit(main())
