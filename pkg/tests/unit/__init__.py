# Empty file to make tests/unit a package
