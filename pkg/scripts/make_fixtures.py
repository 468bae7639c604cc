"""Regenerate src/ste/data/fixtures.json (deterministic; no randomness)."""

from __future__ import annotations

import json
from datetime import date, timedelta
from pathlib import Path

CITIES = [
    ("San Francisco", 17.0, 74), ("Sydney", 19.0, 65), ("Miami Beach", 30.0, 76),
    ("Miami", 31.0, 75), ("Los Angeles", 24.0, 60), ("New York City", 23.0, 64),
    ("Tokyo", 25.0, 70), ("Chicago", 21.0, 62), ("London", 18.0, 71),
    ("Seattle", 16.0, 73), ("Boston", 20.0, 66), ("Denver", 22.0, 45),
    ("Paris", 21.0, 68), ("San Diego", 22.0, 67), ("Madrid", 29.0, 40),
    ("Berlin", 20.0, 63), ("Barcelona", 26.0, 66), ("San Antonio", 33.0, 58),
]
CONDITIONS = ["Sunny", "Partly cloudy", "Cloudy", "Light rain", "Showers", "Clear", "Overcast"]
DIRECTIONS = ["N", "NE", "E", "SE", "S", "SW", "W", "NW"]
MAX_DAYS = 10
START = date(2024, 6, 1)


def day_row(ci: int, base_t: float, base_h: int, d: int) -> dict:
    w = (ci * 7 + d * 3) % 11
    t_max = round(base_t + w * 0.6 - 2.0, 1)
    t_min = round(t_max - 6.5 - (d % 3), 1)
    rain = (ci * 13 + d * 17) % 90
    sunrise_min = 5 * 60 + 40 + (ci * 3 + d) % 45
    sunset_min = 20 * 60 + 5 + (ci * 5 + d * 2) % 50
    return {
        "condition": CONDITIONS[(ci + d) % len(CONDITIONS)],
        "temperature_max_c": t_max,
        "temperature_min_c": t_min,
        "temperature_avg_c": round((t_max + t_min) / 2, 1),
        "humidity_pct": base_h + (d * 5) % 17 - 8,
        "precipitation_mm": round(rain / 12.0, 1),
        "chance_of_rain_pct": rain,
        "chance_of_snow_pct": 0 if t_min > 2 else (ci + d) % 40,
        "uv_index": 2 + (ci + d * 2) % 9,
        "visibility_km": 6 + (ci * 2 + d) % 10,
        "wind_speed_kph": round(8 + ((ci * 11 + d * 7) % 25) * 0.9, 1),
        "wind_direction": DIRECTIONS[(ci * 3 + d) % len(DIRECTIONS)],
        "pressure_mb": 1002 + (ci * 3 + d * 5) % 24,
        "cloud_cover_pct": (ci * 19 + d * 23) % 101,
        "sunrise": f"{sunrise_min // 60:02d}:{sunrise_min % 60:02d}",
        "sunset": f"{sunset_min // 60:02d}:{sunset_min % 60:02d}",
    }


def forecast() -> dict:
    table = {}
    for ci, (city, base_t, base_h) in enumerate(CITIES):
        table[city] = [
            dict(date=(START + timedelta(days=d)).isoformat(), **day_row(ci, base_t, base_h, d))
            for d in range(MAX_DAYS)
        ]
    return {"max_days": MAX_DAYS, "table": table}


PLACES = [
    ("Golden Gate Park", "San Francisco", "park", ["hiking", "trails", "gardens", "lake"], 4.8),
    ("Presidio of San Francisco", "San Francisco", "park", ["hiking", "trails", "views"], 4.7),
    ("Mount Sutro Open Space Reserve", "San Francisco", "park", ["hiking", "trails", "forest"], 4.6),
    ("Dolores Park", "San Francisco", "park", ["picnic", "views"], 4.5),
    ("Tartine Bakery", "San Francisco", "bakery", ["bread", "pastries", "coffee"], 4.6),
    ("Blue Bottle Coffee", "San Francisco", "cafe", ["coffee", "espresso"], 4.4),
    ("Griffith Park", "Los Angeles", "park", ["hiking", "trails", "observatory"], 4.8),
    ("The Getty Center", "Los Angeles", "museum", ["art", "gardens", "architecture"], 4.8),
    ("Central Park", "New York City", "park", ["walking", "lake", "zoo"], 4.8),
    ("The Metropolitan Museum of Art", "New York City", "museum", ["art", "history"], 4.8),
    ("Joe's Pizza", "New York City", "restaurant", ["pizza", "italian"], 4.5),
    ("Hyde Park", "London", "park", ["lake", "walking", "gardens"], 4.7),
    ("British Museum", "London", "museum", ["history", "art"], 4.8),
    ("Borough Market", "London", "market", ["food", "street food"], 4.6),
    ("Shinjuku Gyoen", "Tokyo", "park", ["gardens", "cherry blossoms"], 4.7),
    ("Tsukiji Outer Market", "Tokyo", "market", ["sushi", "seafood", "food"], 4.5),
    ("Royal Botanic Garden", "Sydney", "park", ["gardens", "harbour", "walking"], 4.7),
    ("Bondi to Coogee Walk", "Sydney", "trail", ["hiking", "coast", "beach"], 4.8),
    ("Jardin du Luxembourg", "Paris", "park", ["gardens", "fountains"], 4.7),
    ("Le Comptoir du Relais", "Paris", "restaurant", ["french", "bistro"], 4.4),
    ("Millennium Park", "Chicago", "park", ["art", "concerts"], 4.7),
    ("Pike Place Market", "Seattle", "market", ["seafood", "food", "coffee"], 4.7),
]


def places() -> dict:
    return {
        "max_results": 3,
        "places": [
            {"name": n, "city": c, "category": cat, "tags": tags, "rating": r,
             "address": f"{100 + i * 7} Example Street, {c}"}
            for i, (n, c, cat, tags, r) in enumerate(PLACES)
        ],
    }


GEO = [
    ("London", "GB", 51.50853, -0.12574, "Лондон"),
    ("London", "CA", 42.98339, -81.23304, "Лондон"),
    ("Sydney", "AU", -33.86785, 151.20732, "Сидней"),
    ("Sydney", "CA", 46.15, -60.18, "Сидней"),
    ("Paris", "FR", 48.85341, 2.3488, "Париж"),
    ("Paris", "US", 33.66094, -95.55551, "Париж"),
    ("San Francisco", "US", 37.77493, -122.41942, "Сан-Франциско"),
    ("Tokyo", "JP", 35.6895, 139.69171, "Токио"),
    ("Berlin", "DE", 52.52437, 13.41053, "Берлин"),
    ("Madrid", "ES", 40.4165, -3.70256, "Мадрид"),
    ("Moscow", "RU", 55.75222, 37.61556, "Москва"),
    ("Springfield", "US", 39.80172, -89.64371, "Спрингфилд"),
]


def geo() -> dict:
    return {
        "places": [
            {"name": n, "country": c, "lat": lat, "lon": lon, "name_ru": ru}
            for n, c, lat, lon, ru in GEO
        ]
    }


STATIONS = {
    "12TH": "12th St. Oakland City Center", "16TH": "16th St. Mission", "19TH": "19th St. Oakland",
    "24TH": "24th St. Mission", "ANTC": "Antioch", "ASHB": "Ashby", "BALB": "Balboa Park",
    "BAYF": "Bay Fair", "BERY": "Berryessa/North San Jose", "CIVC": "Civic Center/UN Plaza",
    "COLM": "Colma", "DALY": "Daly City", "DBRK": "Downtown Berkeley", "DUBL": "Dublin/Pleasanton",
    "EMBR": "Embarcadero", "FRMT": "Fremont", "GLEN": "Glen Park", "HAYW": "Hayward",
    "LAKE": "Lake Merritt", "MCAR": "MacArthur", "MLBR": "Millbrae", "MONT": "Montgomery St.",
    "OAKL": "Oakland International Airport", "PITT": "Pittsburg/Bay Point", "POWL": "Powell St.",
    "RICH": "Richmond", "SFIA": "San Francisco International Airport", "UCTY": "Union City",
    "WARM": "Warm Springs/South Fremont", "WOAK": "West Oakland",
}


def bart() -> dict:
    return {
        "stations": STATIONS,
        "issued": "2024-06-01 08:00 PDT",
        "advisories": {
            "*": "No delays reported.",
            "EMBR": "Elevator out of service at Embarcadero; use Montgomery St. for accessible entry.",
            "SFIA": "Reduced service between Millbrae and SFO after 9 p.m.",
        },
    }


def main() -> None:
    out = Path(__file__).resolve().parents[1] / "src" / "ste" / "data" / "fixtures.json"
    doc = {
        "forecast_weather": forecast(),
        "search_places": places(),
        "geo_coordinates": geo(),
        "bart_advisory": bart(),
    }
    out.write_text(json.dumps(doc, indent=1, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    print(out)


if __name__ == "__main__":
    main()
