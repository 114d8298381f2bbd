import sys

from searchtta.cli import main

sys.exit(main())
