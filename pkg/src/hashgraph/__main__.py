import sys

from hashgraph.cli import main

sys.exit(main())
