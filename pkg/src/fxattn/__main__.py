import sys

from fxattn.cli import main

sys.exit(main())
