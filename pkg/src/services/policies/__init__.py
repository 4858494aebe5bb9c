# Cache replacement simulators
