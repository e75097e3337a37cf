"""Wiener/Ziemer growth classes for the fixed gallery manifest."""
import time

from wienergauge.pipeline import GALLERY_HEADER, GALLERY_MANIFEST, run_gallery, worker_count


def main():
    t0 = time.perf_counter()
    rows = run_gallery(GALLERY_MANIFEST, workers=worker_count())
    print(GALLERY_HEADER)
    for row in rows:
        print(row.csv_row())
    for row in rows:
        d = ", ".join(f"{x:.3g}" for x in row.profile.delta)
        print(f"# {row.entry.token} N={row.entry.N}: delta [{d}] "
              f"fit residual {row.report.fit_residual:.3g}")
    print(f"# {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
