import sys

from dnstiming.cli import main

sys.exit(main())
