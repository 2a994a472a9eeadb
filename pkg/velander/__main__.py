import sys

from velander.cli import main

sys.exit(main())
