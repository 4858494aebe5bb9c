# Reuse distance and locality features
