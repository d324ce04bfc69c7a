from jkge.cli import main

main()
