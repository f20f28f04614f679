import os

# every solve in the suite re-checks its flows against the raw constraints
os.environ["PEDACCESS_AUDIT"] = "1"
