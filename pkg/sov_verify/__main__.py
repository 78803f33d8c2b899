import sys

from sov_verify.cli import main

sys.exit(main())
