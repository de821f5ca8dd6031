"""Hand-labelled exact-match cases: (prediction, golds, expected em)."""

EM_CASES = [
    ("YG Entertainment", ["YG Entertainment"], 1),
    ("yg entertainment", ["YG Entertainment"], 1),
    ("  YG   Entertainment. ", ["YG Entertainment"], 1),
    ("The Beatles", ["Beatles"], 1),
    ("a beatles", ["the Beatles"], 1),
    ("An apple", ["apple"], 1),
    ("Anne", ["Ann"], 0),
    ("theater", ["ater"], 0),
    ("12 June 1516", ["12 June 1516"], 1),
    ("12 june, 1516", ["12 June 1516"], 1),
    ("June 12 1516", ["12 June 1516"], 0),
    ("1516", ["12 June 1516"], 0),
    ("U.S.A.", ["USA"], 1),
    ("Yang Hyun-suk", ["Yang Hyunsuk"], 1),
    ("Yang Hyun suk", ["Yang Hyunsuk"], 0),
    ("Paris", ["London", "paris"], 1),
    ("Paris", ["London", "Berlin"], 0),
    ("", ["x"], 0),
    ("", ["The"], 1),
    ("«Les Misérables»", ["Les Misérables"], 1),
    ("Les Miserables", ["Les Misérables"], 0),
    ("the the the", ["a"], 1),
    ("it's", ["its"], 1),
    ("New\tYork\nCity", ["new york city"], 1),
    ("YG Entertainment Inc", ["YG Entertainment"], 0),
    ("t.he cat", ["cat"], 1),
]

# strict mode compares raw strings
STRICT_CASES = [
    ("YG Entertainment", ["YG Entertainment"], 1),
    ("yg entertainment", ["YG Entertainment"], 0),
    ("YG Entertainment.", ["YG Entertainment"], 0),
]
