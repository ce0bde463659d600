from hidsq.cli import main
import sys

sys.exit(main())
