# Domain types for the gzsc services
