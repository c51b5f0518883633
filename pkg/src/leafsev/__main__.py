import sys

from leafsev.cli import main

sys.exit(main())
