from .cli import main

if __name__ == "__main__":
    # `python -m verigraph` should read like the installed command in usage lines
    main(prog_name="verigraph")
