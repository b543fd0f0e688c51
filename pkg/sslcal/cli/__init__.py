"""sslcal.cli: command-line interface modules.

main.py    = Entry point + argument parsing
train.py   = Single training run
sweep.py   = Variant × seed sweeps and presets
analyze.py = analyze / dynamics / rank commands
report.py  = JSON + CSV report files
"""
