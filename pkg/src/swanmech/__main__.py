import sys

from swanmech.cli import main

sys.exit(main())
