# Gelfand-Zetlin representations, coadjoint orbits and their semiclassical limit
