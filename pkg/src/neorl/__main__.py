import sys

from neorl.cli import main

sys.exit(main())
