import sys

from msdclass.cli import main

sys.exit(main())
