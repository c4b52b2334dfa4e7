"""Download the UCI Adult training file and rewrite it in the layout glassbox reads.

The UCI file has no header, uses ", " separators and hyphenated names; the
output has a dot-named header and bare comma separators. Verify the result
with `glassbox ingest --data <out>` (it checks the documented sha256).

    python scripts/fetch_adult.py data/adult.csv
"""
import argparse
import urllib.request

UCI_URL = "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/adult.data"
HEADER = (
    "age,workclass,fnlwgt,education,education.num,marital.status,occupation,"
    "relationship,race,sex,capital.gain,capital.loss,hours.per.week,native.country,income"
)


def convert(text: str) -> str:
    rows = [HEADER]
    for line in text.splitlines():
        if not line.strip():
            continue
        rows.append(",".join(cell.strip() for cell in line.split(",")))
    return "\n".join(rows) + "\n"


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out")
    parser.add_argument("--url", default=UCI_URL)
    args = parser.parse_args()
    with urllib.request.urlopen(args.url) as resp:
        text = resp.read().decode("utf-8")
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(convert(text))


if __name__ == "__main__":
    main()
