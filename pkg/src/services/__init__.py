# Trace analysis, learning and cache simulation components
