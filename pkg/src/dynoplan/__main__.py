import sys

from dynoplan.cli import main

sys.exit(main())
