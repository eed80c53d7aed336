#!/usr/bin/env python3
"""Regenerates the MovieLens-format test fixture under data/fixture/.

The fixture is small but learnable. Every movie carries a genre tag plus a
theme tag; every user prefers one (genre, theme) cell, signalled redundantly
through demographics (occupation code == genre index, age bucket determines
the theme) and recent-window behavior. A short default training run therefore
ranks held-out in-cell movies well above chance. Deterministic: a fixed seed
always writes byte-identical files.
"""

import random
from pathlib import Path

SEED = 20240601
N_GENRES = 10
N_THEMES = 4
MOVIES_PER_CELL = 10  # per (genre, theme)
MOVIES_PER_GENRE = N_THEMES * MOVIES_PER_CELL
N_USERS = 24
CELL_EVENTS = 10       # all of the user's preferred cell; the last one is the holdout
IN_GENRE_EVENTS = 27   # same genre, other themes, rated 4
OTHER_EVENTS = 30      # anything else, rated 1-2

GENRES = [
    "Action", "Adventure", "Comedy", "Crime", "Drama", "Fantasy",
    "Horror", "Musical", "Mystery", "Romance",
]
THEMES = ["Documentary", "Animation", "War", "Western"]
GENRE_WORDS = [
    "Strike", "Quest", "Laugh", "Heist", "Sorrow", "Realm",
    "Dread", "Melody", "Cipher", "Embrace",
]
FILLERS = [
    "Midnight", "Crimson", "Silver", "Echo", "Garden", "Shadow",
    "River", "Stone", "Ember", "Frost", "Hollow", "Sky",
]
AGE_CODES = [1, 18, 25, 35, 45, 50, 56]


def main():
    rng = random.Random(SEED)
    out_dir = Path(__file__).resolve().parent.parent / "data" / "fixture"
    out_dir.mkdir(parents=True, exist_ok=True)

    movies = []  # (id, title, tags)
    for g in range(N_GENRES):
        for i in range(MOVIES_PER_GENRE):
            movie_id = g * MOVIES_PER_GENRE + i + 1
            theme = i % N_THEMES
            filler = FILLERS[(g * 7 + i * 3) % len(FILLERS)]
            second = FILLERS[(g + i * 5 + 4) % len(FILLERS)]
            year = 1930 + (movie_id * 13) % 70
            title = f"{GENRE_WORDS[g]} {filler} {second} ({year})"
            movies.append((movie_id, title, [GENRES[g], THEMES[theme]]))

    users = []  # (id, gender, age, occupation=genre, theme)
    for uid in range(1, N_USERS + 1):
        genre = (uid - 1) % N_GENRES
        age_idx = (uid - 1) % len(AGE_CODES)
        theme = age_idx % N_THEMES  # the age bucket pins the theme
        gender = "F" if uid % 3 == 0 else "M"
        users.append((uid, gender, AGE_CODES[age_idx], genre, theme))

    ratings = []  # (uid, movie_id, rating, timestamp)
    for uid, _gender, _age, genre, theme in users:
        genre_base = genre * MOVIES_PER_GENRE
        cell = [genre_base + i + 1 for i in range(MOVIES_PER_GENRE) if i % N_THEMES == theme]
        in_genre = [genre_base + i + 1 for i in range(MOVIES_PER_GENRE) if i % N_THEMES != theme]
        elsewhere = [m for m in range(1, N_GENRES * MOVIES_PER_GENRE + 1)
                     if not genre_base < m <= genre_base + MOVIES_PER_GENRE]

        cell_order = rng.sample(cell, CELL_EVENTS)
        events = [(m, 5) for m in cell_order[:-1]]
        events += [(m, 4) for m in rng.sample(in_genre, IN_GENRE_EVENTS)]
        events += [(m, rng.choice([1, 2])) for m in rng.sample(elsewhere, OTHER_EVENTS)]
        rng.shuffle(events)
        events.append((cell_order[-1], 5))  # holdout: unseen in-cell movie, top rating

        base = 978300000 + uid * 500000
        for i, (movie_id, rating) in enumerate(events):
            ratings.append((uid, movie_id, rating, base + i * 3600))

    with open(out_dir / "users.dat", "w", encoding="latin-1") as f:
        for uid, gender, age, occ, _theme in users:
            f.write(f"{uid}::{gender}::{age}::{occ}::{10000 + uid:05d}\n")
    with open(out_dir / "movies.dat", "w", encoding="latin-1") as f:
        for movie_id, title, tags in movies:
            f.write(f"{movie_id}::{title}::{'|'.join(tags)}\n")
    with open(out_dir / "ratings.dat", "w", encoding="latin-1") as f:
        for uid, movie_id, rating, ts in ratings:
            f.write(f"{uid}::{movie_id}::{rating}::{ts}\n")

    print(f"wrote {len(users)} users, {len(movies)} movies, {len(ratings)} ratings to {out_dir}")


if __name__ == "__main__":
    main()
