from biofuse.cli import main

main()
