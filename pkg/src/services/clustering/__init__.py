# Address-delta clustering
