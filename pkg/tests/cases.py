"""Hand-written reference cases shared by several test modules."""

from __future__ import annotations

from ste.sandbox import ToolCall

# gold call is a place search; the prediction names a different tool
PLACES_QUERY = "Which parks in San Francisco have hiking trails?"
PLACES_GOLD = ToolCall("search_places", {"query": "parks in San Francisco with hiking trails"})
PLACES_GOLD_TEXT = (
    "Thought: I should search for parks with hiking trails in San Francisco.\n"
    "Action: search_places\n"
    'Action Input: {"query": "parks in San Francisco with hiking trails"}'
)
PLACES_PRED_TEXT = (
    "Action: Geographic coordinates by placename\n"
    'Action Input: {"name": "San Francisco", "lang": "en"}'
)

# right tool, but a required argument is left out
SYDNEY_QUERY = "What are the geographic coordinates for the city of Sydney, Canada?"
SYDNEY_GOLD = ToolCall("geo_coordinates", {"name": "Sydney", "country": "CA", "lang": "en"})
SYDNEY_PRED_TEXT = 'Action: geo_coordinates\nAction Input: {"name": "Sydney", "country": "CA"}'

# right tool and shape, wrong station code
ADVISORY_QUERY = "What is the current advisory information for the Union City station?"
ADVISORY_GOLD = ToolCall("bart_advisory", {"cmd": "bsa", "orig": "UCTY"})
ADVISORY_PRED_TEXT = 'Action: bart_advisory\nAction Input: {"cmd": "bsa", "orig": "UNION"}'

# exact match
WEATHER_QUERY = "What will the weather be like in Paris tomorrow?"
WEATHER_GOLD = ToolCall("forecast_weather", {"location": "Paris", "days": "1"})
WEATHER_PRED_TEXT = 'Action: forecast_weather\nAction Input: {"location": "Paris", "days": "1"}'
