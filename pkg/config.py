import os
from dotenv import load_dotenv

load_dotenv()

ECG_DATA_DIR = os.getenv("ECG_DATA_DIR", "data/mitdb")
ECG_RESULTS_DIR = os.getenv("ECG_RESULTS_DIR", "results")
LOG_LEVEL = os.getenv("ECG_LOG_LEVEL", "INFO")

DEFAULT_SEED = int(os.getenv("ECG_SEED", 1))
DEFAULT_THREADS = int(os.getenv("ECG_THREADS", 1))

SAMPLING_RATE_HZ = 360.0

MITBIH_RECORDS = [
    "100", "101", "102", "103", "104", "105", "106", "107", "108", "109",
    "111", "112", "113", "114", "115", "116", "117", "118", "119", "121",
    "122", "123", "124", "200", "201", "202", "203", "205", "207", "208",
    "209", "210", "212", "213", "214", "215", "217", "219", "220", "221",
    "222", "223", "228", "230", "231", "232", "233", "234",
]

CONFIG_FILENAME = "pipeline_config.txt"
