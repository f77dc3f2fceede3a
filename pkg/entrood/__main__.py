import sys

from entrood.cli import main

sys.exit(main())
