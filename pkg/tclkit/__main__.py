from tclkit.cli import main

raise SystemExit(main())
