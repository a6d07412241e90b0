import sys

from dbpinn.cli import main

sys.exit(main())
