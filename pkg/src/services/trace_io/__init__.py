# Trace parsing and statistics
