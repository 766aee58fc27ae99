from maskcurate.cli import main

main()
