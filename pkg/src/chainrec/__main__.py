from chainrec.cli import main
import sys
sys.exit(main())
