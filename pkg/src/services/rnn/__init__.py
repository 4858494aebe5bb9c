# Stacked LSTM regressor
