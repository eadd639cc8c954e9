from anisotropic_heat_kernel.main import main

raise SystemExit(main())
