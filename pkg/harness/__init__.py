# Run configuration, sweeps and CSV reports
