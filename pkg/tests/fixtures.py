"""Fixed 20-sentence evaluation corpus used by the metric oracle tests."""

FIXTURE_CORPUS = [
    ("the brown chair is next to the table",
     ["the brown chair is next to the table",
      "a brown chair beside the table"]),
    ("two", ["two", "2"]),
    ("on the left side of the room", ["on the left side", "left side"]),
    ("a red refrigerator", ["the red refrigerator in the corner"]),
    ("three chairs", ["three chairs", "3 chairs"]),
    ("the sink is white", ["white", "the sink is white"]),
    ("next to the window", ["near the window", "by the window"]),
    ("a small wooden desk", ["a large wooden desk"]),
    ("the door is closed", ["the door is open"]),
    ("blue", ["blue"]),
    ("there is no bathtub", ["one bathtub", "a single bathtub"]),
    ("the picture hangs above the sofa",
     ["a picture above the sofa", "the picture hangs over the couch"]),
    ("four tables and one counter", ["four tables", "4 tables"]),
    ("it is in the middle of the kitchen",
     ["in the middle", "center of the kitchen"]),
    ("a gray garbage bin under the desk", ["the gray garbage bin"]),
    ("curtains cover the window", ["the curtain covers the window"]),
    ("the bookshelf is full of books", ["an empty bookshelf"]),
    ("one", ["one", "1"]),
    ("the toilet is beside the sink",
     ["the toilet is next to the sink", "beside the sink"]),
    ("a black sofa facing the television", ["a black sofa", "the dark couch"]),
]
