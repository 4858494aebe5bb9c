# Sample generation and dataset files
