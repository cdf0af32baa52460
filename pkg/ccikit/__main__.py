import sys

from ccikit.main import main

sys.exit(main())
