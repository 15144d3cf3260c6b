from geodiverse.cli import main

main()
