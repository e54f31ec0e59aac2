"""Synthetic Cambridge-style restaurant dialogue dataset.

Writes ontology, restaurant database and dialogue JSON files in the same
schema as the published Cambridge restaurant-search corpus, so the full
pipeline (ingestion, tracker pre-training, latent-intention training,
fine-tuning, evaluation, serving) runs end to end without the original
download.  Dialogue counts, turn counts, response variety, the unfinished
fraction and the wizard's habit of volunteering information the user
never asked for are all tuned to mirror the original corpus statistics.

Everything is driven by a single seed; the same seed always produces
byte-identical files.
"""

import json
import random
from pathlib import Path

N_DIALOGUES = 676
N_RESTAURANTS = 99

SERVED_FOODS = [
    "british", "chinese", "indian", "italian", "thai", "french", "korean",
    "japanese", "vietnamese", "spanish", "turkish", "mexican", "seafood",
    "european", "gastropub", "portuguese", "lebanese", "mediterranean",
    "international", "asian oriental", "north american", "modern european",
]
UNSERVED_FOODS = [
    "indonesian", "russian", "polish", "caribbean", "danish", "cuban",
    "swedish", "welsh",
]
AREAS = ["centre", "north", "south", "east", "west"]
PRICERANGES = ["cheap", "moderate", "expensive"]

# --------------------------------------------------------------------------
# knob block: generation probabilities, tuned against the target corpus
# statistics (total turns, cluster head sizes, unfinished share)
# --------------------------------------------------------------------------
UNFINISHED_P = 0.083          # dialogues that end before the task completes
NOMATCH_P = 0.12              # dialogues that first ask for an unserved cuisine
GAMBLE_P = 0.33               # finished dialogues with a volunteered-info request
GAMBLE_OFFER_CHANNEL_P = 0.40  # volunteered slot appears in the offer sentence
PROBE_P = 0.14                # wizard probes an unconstrained slot (dontcare)
SPLIT_INFORM_P = 0.40         # multi-constraint users hold one slot back
SPLIT_ANSWER_P = 0.74         # multi-slot requests asked over two turns
EXTRA_THANKS_P = 0.50         # extra pleasantry exchange before closing
SPONTANEOUS_DUMP_P = 0.08     # wizard volunteers an extra slot unprompted
FLAVOUR_P = 0.12              # user adds a colour phrase to the opening

OFFER_SUFFIX_P = 0.72
ANSWER_PREFIX_P = 0.50
ANSWER_SUFFIX_P = 0.54
ANYTHING_ELSE_P = 0.22
ASK_DECOR_P = 0.55
APOLOGY_DECOR_P = 0.45
CLOSING_DECOR_P = 0.10

# Closing templates; the heavy head of the first entry anchors the most
# frequent response cluster, everything else is spread thin.
CLOSINGS = [
    (0.370, "thank you , goodbye ."),
    (0.120, "you are welcome . goodbye ."),
    (0.075, "thank you for using the cambridge restaurant system . goodbye ."),
    (0.060, "goodbye ."),
    (0.045, "you are welcome . enjoy your meal !"),
    (0.040, "have a nice day !"),
    (0.035, "glad i could help . goodbye ."),
    (0.030, "thank you for calling . goodbye ."),
    (0.025, "you are welcome , have a nice day ."),
    (0.025, "enjoy your dinner , goodbye !"),
    (0.022, "cheers , goodbye ."),
    (0.020, "happy dining . goodbye !"),
    (0.020, "take care now , goodbye ."),
    (0.018, "all the best , goodbye ."),
    (0.016, "bye bye , enjoy yourselves !"),
    (0.015, "thanks for stopping by . goodbye ."),
    (0.014, "farewell , and bon appetit !"),
    (0.013, "so long , enjoy the food ."),
    (0.012, "wishing you a pleasant evening . goodbye ."),
    (0.012, "see you next time . goodbye ."),
    (0.008, "it was a pleasure assisting you . goodbye ."),
    (0.005, "delighted to have helped . goodbye ."),
]

CLOSING_SUFFIXES = ["take care !", "all the best !", "good luck !",
                    "enjoy your evening !", "stay well !", "safe travels !",
                    "mind how you go !", "cheerio !"]

PLEASANTRY_OPENERS = ["you are welcome .", "my pleasure .", "no problem at all .",
                      "happy to help .", "glad that works .", "any time .",
                      "of course .", "sure thing .", "not a problem .",
                      "you got it .", "delighted to assist .", "pleasure is mine ."]
PLEASANTRY_QUESTIONS = ["anything else today ?", "more i can look up ?",
                        "need anything further ?", "anything else on the list ?",
                        "shall i check more ?", "something more you wanted ?",
                        "more i can find ?", "any other details ?",
                        "what else can i do ?", "more questions ?"]


def _pleasantry(rng):
    if rng.random() < 0.30:
        return "you are welcome . is there anything else i can help you with ?"
    return "%s %s" % (rng.choice(PLEASANTRY_OPENERS), rng.choice(PLEASANTRY_QUESTIONS))

ANYTHING_ELSE_POOL = [
    "is there anything else i can help you with ?",
    "anything else i can look up ?",
    "can i assist with more ?",
    "any other details ?",
    "need anything else today ?",
    "shall i find more ?",
]

ADJECTIVES = ["nice", "great", "lovely", "fantastic", "wonderful", "fine",
              "excellent", "superb", "popular", "charming", "cosy", "smart",
              "terrific", "delightful"]

SERVE_VERBS = [
    (0.25, "{name} serves {food} food ."),
    (0.20, "{name} offers {food} food ."),
    (0.15, "{name} does {food} food ."),
    (0.12, "{name} specialises in {food} cooking ."),
    (0.10, "{name} cooks up {food} dishes ."),
    (0.10, "{name} prepares {food} fare ."),
    (0.08, "{name} dishes out {food} plates ."),
]

OFFER_SUFFIXES = [
    "locals adore it .",
    "the terrace is lovely .",
    "very relaxed atmosphere .",
    "visitors rate it highly .",
    "bookings are recommended .",
    "portions run generous .",
    "students favour it .",
    "the kitchen closes late .",
    "the menu changes seasonally .",
    "staff are friendly .",
    "weekends get busy .",
    "the decor charms .",
    "the chef trained abroad .",
    "long wine list .",
    "desserts earn praise .",
    "live music fridays .",
    "plenty vegetarian choices .",
    "lunch deals are great .",
    "the platter stands out .",
    "families find it handy .",
    "candlelit and romantic .",
    "regulars praise the tasting menu .",
    "service stays brisk .",
    "riverside views too .",
]

ANSWER_PREFIXES = ["sure ,", "of course ,", "certainly ,", "no problem ,",
                   "right then ,", "absolutely ,", "happy to help ,",
                   "one moment ,"]

ANSWER_SUFFIXES = [
    "worth a ring .",
    "they answer quickly .",
    "easy to find .",
    "parking is simple .",
    "entrance off the main road .",
    "you cannot miss the sign .",
    "open until late .",
    "mention this service .",
    "the manager is welcoming .",
    "buses stop outside .",
    "short stroll from the station .",
    "look for the green awning .",
]

FIRST_NAME_WORDS = [
    "golden", "royal", "blue", "silver", "jade", "crimson", "amber", "ivory",
    "copper", "emerald", "velvet", "rustic", "urban", "little", "grand",
    "happy", "lucky", "spice", "pepper", "saffron", "ginger", "lotus",
    "bamboo", "olive", "maple", "willow", "harbour", "garden", "corner",
    "riverside", "old", "new", "sunny", "midnight", "morning",
]
SECOND_NAME_WORDS = [
    "house", "palace", "kitchen", "table", "garden", "lounge", "corner",
    "grill", "bistro", "tavern", "pantry", "parlour", "terrace", "spoon",
    "fork", "plate", "oven", "hearth", "cellar", "yard",
]
STREETS = [
    "newmarket road", "regent street", "mill lane", "king street",
    "hills road", "station road", "bridge street", "trumpington street",
    "magdalene street", "castle hill", "east road", "chesterton lane",
    "victoria avenue", "huntingdon road", "norfolk street", "lensfield road",
    "cherry hinton road", "barton road", "panton street", "gwydir street",
    "mawson road", "devonshire road", "tenison road", "clarendon street",
    "sidney street",
]
DISTRICTS = ["", "city centre", "fen ditton", "chesterton", "cherry hinton",
             "newnham", "petersfield", "romsey town"]

GREETINGS = ["", "hello ,", "hi ,", "hi there ,", "good afternoon ,",
             "good evening ,", "hey ,", "greetings ,", "hiya ,"]

FLAVOUR_PHRASES = [
    "my friends are visiting this weekend and",
    "we are celebrating an anniversary and",
    "i am new to the city and",
    "my colleagues recommended this app and",
    "i am planning a birthday dinner and",
    "we just finished a long walk and",
    "my parents arrive tomorrow and",
    "i am entertaining clients tonight and",
    "our book club meets on thursday and",
    "i fancy something different today and",
    "the rain ruined our picnic plans so",
    "my flatmate keeps raving about this area so",
    "we are heading to a concert later and",
    "i skipped lunch during meetings so",
    "my cousin is getting married nearby and",
    "our usual haunt closed for refurbishment so",
    "i promised the kids a treat and",
    "my gym trainer allowed a cheat meal so",
    "the office party was cancelled and",
    "i just passed my driving test and",
]


def _weighted(rng, table):
    x = rng.random() * sum(w for w, _ in table)
    for w, item in table:
        x -= w
        if x <= 0:
            return item
    return table[-1][1]


def build_ontology():
    return {
        "informable": {
            "food": sorted(SERVED_FOODS + UNSERVED_FOODS),
            "pricerange": list(PRICERANGES),
            "area": list(AREAS),
        },
        "requestable": ["address", "phone", "postcode", "food", "pricerange", "area"],
    }


def build_kb(rng):
    """99 unique restaurants with complete contact fields."""
    records = [
        {"name": "curry prince", "food": "indian", "pricerange": "moderate",
         "area": "east", "address": "451 newmarket road fen ditton",
         "phone": "01223 566388", "postcode": "cb58jj"},
        {"name": "the gandhi", "food": "indian", "pricerange": "cheap",
         "area": "centre", "address": "72 regent street city centre",
         "phone": "01223 353942", "postcode": "cb21dp"},
        {"name": "golden house", "food": "chinese", "pricerange": "cheap",
         "area": "centre", "address": "12 lensfield road city centre",
         "phone": "01842 753771", "postcode": "cb21eg"},
        {"name": "the italian kitchen", "food": "italian", "pricerange": "moderate",
         "area": "south", "address": "33 mill lane", "phone": "01223 642180",
         "postcode": "cb20hs"},
    ]
    names = {r["name"] for r in records}
    phones = {r["phone"] for r in records}
    postcodes = {r["postcode"] for r in records}
    addresses = {r["address"] for r in records}
    food_weights = [(6, f) for f in ("chinese", "indian", "italian", "british")]
    food_weights += [(2, f) for f in SERVED_FOODS
                     if f not in ("chinese", "indian", "italian", "british")]
    while len(records) < N_RESTAURANTS:
        style = rng.random()
        if style < 0.55:
            name = "%s %s" % (rng.choice(FIRST_NAME_WORDS), rng.choice(SECOND_NAME_WORDS))
        elif style < 0.85:
            name = "the %s %s" % (rng.choice(FIRST_NAME_WORDS), rng.choice(SECOND_NAME_WORDS))
        else:
            name = "%s %s %s" % (rng.choice(FIRST_NAME_WORDS),
                                 rng.choice(SECOND_NAME_WORDS), "restaurant")
        if name in names:
            continue
        address = "%d %s" % (rng.randrange(1, 480), rng.choice(STREETS))
        district = rng.choice(DISTRICTS)
        if district:
            address = "%s %s" % (address, district)
        if address in addresses:
            continue
        phone = "01223 %06d" % rng.randrange(100000, 999999)
        if phone in phones:
            continue
        postcode = "cb%d%d%s%s" % (rng.randrange(1, 6), rng.randrange(0, 10),
                                   rng.choice("abcdefghjklmnpqrstuvwxy"),
                                   rng.choice("abcdefghjklmnpqrstuvwxy"))
        if postcode in postcodes:
            continue
        names.add(name)
        phones.add(phone)
        postcodes.add(postcode)
        addresses.add(address)
        records.append({"name": name, "food": _weighted(rng, food_weights),
                        "pricerange": _weighted(rng, [(3, "cheap"), (4, "moderate"),
                                                      (3, "expensive")]),
                        "area": _weighted(rng, [(3, "centre"), (1.75, "north"),
                                                (1.75, "south"), (1.75, "east"),
                                                (1.75, "west")]),
                        "address": address, "phone": phone, "postcode": postcode})
    return records


# --------------------------------------------------------------------------
# user-side phrasings
# --------------------------------------------------------------------------

def _inform_sentence(rng, parts):
    """User sentence informing the given slot values."""
    food = parts.get("food")
    area = parts.get("area")
    price = parts.get("pricerange")
    price_surface = price
    if price == "moderate" and rng.random() < 0.18:
        price_surface = "moderately priced"
    if price == "cheap" and rng.random() < 0.10:
        price_surface = "inexpensive"
    verb = rng.choice(["i want", "i would like", "i am looking for", "i need",
                       "can you find me", "are there any options for",
                       "i am after", "please find me", "i am hunting for",
                       "could you suggest", "i am craving", "i fancy",
                       "help me track down", "i am searching for"])
    bits = []
    if price_surface:
        bits.append(price_surface)
    if food:
        bits.append(food)
    noun = rng.choice(["restaurant", "place", "place to eat", "spot", "venue",
                       "eatery", "joint"])
    core = "%s a %s %s" % (verb, " ".join(bits), noun) if bits else "%s a %s" % (verb, noun)
    if area:
        core += rng.choice([" in the %s", " in the %s of town", " somewhere in the %s",
                            " around the %s part of town", " near the %s"]) % area
    tail = rng.choice(["", "", "", " please", " , thanks", " if possible",
                       " when you get a chance"])
    return core + tail


def _single_inform(rng, slot, value):
    if slot == "area":
        return rng.choice(["the %s please", "in the %s", "the %s of town",
                           "i would prefer the %s", "somewhere in the %s would be good",
                           "how about the %s", "let us say the %s",
                           "make it the %s side"]) % value
    if slot == "pricerange":
        surface = value
        if value == "moderate" and rng.random() < 0.2:
            surface = "moderately priced"
        return rng.choice(["something %s please", "%s please", "i would like something %s",
                           "%s sounds right", "let us keep it %s",
                           "%s works for me", "go with %s"]) % surface
    return rng.choice(["%s food please", "i fancy %s food", "%s sounds good",
                       "let us try %s", "some %s food would be great",
                       "%s would hit the spot", "make it %s"]) % value


DONTCARE_ANSWERS = {
    "food": ["any kind of food is fine", "i do not mind the cuisine",
             "surprise me", "no preference at all", "whatever you recommend",
             "anything tasty works"],
    "area": ["any area is fine", "anywhere is fine", "i do not mind the location",
             "no preference on the area", "wherever , honestly",
             "any side of town suits me"],
    "pricerange": ["any price range is fine", "price does not matter",
                   "i do not mind the cost", "whatever the price",
                   "budget is not a concern", "money is no object"],
}

REQUEST_PHRASES = {
    frozenset(["phone"]): ["can i get the phone number ?", "what is the phone number ?",
                           "may i have their phone number please ?", "phone number please",
                           "do you have their phone number ?", "yes , the phone number please",
                           "how do i ring them ?", "what number should i call ?"],
    frozenset(["address"]): ["what is the address ?", "where is it located ?",
                             "can i get the address ?", "address please",
                             "where can i find it ?", "whereabouts exactly ?",
                             "yes , the address please", "how do i get there ?"],
    frozenset(["postcode"]): ["what is the postcode ?", "can i have the postcode ?",
                              "postcode please", "what postcode is that ?",
                              "do you know the postcode ?"],
    frozenset(["food"]): ["what kind of food do they serve ?", "what cuisine is that ?",
                          "what sort of food do they do ?",
                          "what style of cooking is it ?"],
    frozenset(["area"]): ["what part of town is it in ?", "what area is that in ?",
                          "which part of town is that ?", "what side of town are they on ?"],
    frozenset(["pricerange"]): ["what is the price range ?", "how much does it cost ?",
                                "what sort of prices do they charge ?",
                                "is it pricey there ?"],
    frozenset(["phone", "address"]): ["can i get the address and phone number ?",
                                      "what is their address and phone number ?",
                                      "may i have the address and the phone number please ?",
                                      "yes , the address and phone number please",
                                      "give me the address and the number please"],
    frozenset(["phone", "postcode"]): ["can i get the phone number and postcode ?",
                                       "what is their phone number and postcode ?"],
    frozenset(["address", "postcode"]): ["can i get the address and postcode ?",
                                         "what is the address and postcode there ?"],
    frozenset(["phone", "address", "postcode"]): [
        "can i get the address , phone number and postcode ?",
        "may i have their address , phone and postcode please ?"],
}

THANKS_CLOSINGS = ["thank you , goodbye", "thanks , bye", "okay , thank you goodbye",
                   "that is all , thank you", "great , thanks !", "perfect , thank you .",
                   "wonderful , thanks a lot", "brilliant , thank you . bye",
                   "cheers , that is everything", "splendid , many thanks . bye"]
NEVERMIND_CLOSINGS = ["actually , nevermind . thank you", "i have to go , sorry . thanks",
                      "forget it , thanks anyway", "on second thought , never mind . bye",
                      "sorry , i changed my mind . goodbye",
                      "something came up , got to run . bye"]
EXTRA_THANKS = ["thank you !", "great , thank you very much", "that is very helpful , thanks",
                "lovely , thank you", "awesome , cheers", "much appreciated"]
NO_THATS_ALL = ["no , that is all . goodbye", "no thanks , that is everything . bye",
                "nothing else , thank you . goodbye", "no , that will do . thanks",
                "nope , all sorted . bye", "that covers it , goodbye"]

RELAX_PHRASES = ["oh no . how about %s ?", "okay then , is there %s food instead ?",
                 "hmm , %s then ?", "what a pity . %s would also work",
                 "alright , let us try %s instead", "shame . fine , %s it is",
                 "really ? then maybe %s ?"]


def _request_sentence(rng, slots):
    return rng.choice(REQUEST_PHRASES[frozenset(slots)])


# --------------------------------------------------------------------------
# wizard-side phrasings
# --------------------------------------------------------------------------

ASK_TEMPLATES = {
    "food": [(0.32, "what kind of food would you like ?"),
             (0.22, "what type of cuisine are you looking for ?"),
             (0.16, "do you have a cuisine preference ?"),
             (0.16, "any particular cuisine in mind ?"),
             (0.14, "which style of food shall i search for ?")],
    "area": [(0.32, "what area would you like ?"),
             (0.22, "what part of town do you have in mind ?"),
             (0.16, "which area of town would you prefer ?"),
             (0.16, "where in town should it be ?"),
             (0.14, "any side of town in mind ?")],
    "pricerange": [(0.32, "what price range would you like ?"),
                   (0.22, "how fancy should the prices be ?"),
                   (0.16, "what price range do you have in mind ?"),
                   (0.16, "any budget i should keep in mind ?"),
                   (0.14, "are we splashing out or keeping it thrifty ?")],
}

ASK_OPENERS = ["quick check ,", "one detail ,", "to narrow down ,",
               "before i search ,", "helping me choose ,", "small question ,",
               "to fine tune ,", "speeding things up ,", "so i pick well ,",
               "narrowing the field ,"]


def _ask_sentence(rng, slot):
    core = _weighted(rng, ASK_TEMPLATES[slot])
    if rng.random() < ASK_DECOR_P:
        return "%s %s" % (rng.choice(ASK_OPENERS), core)
    return core


APOLOGY_CORES = [
    "my apologies , nothing serving %s food turned up .",
    "sadly the %s options around here are zero .",
    "i am afraid %s cuisine is not on offer anywhere nearby .",
    "regrettably no %s kitchens operate in town .",
    "alas , %s food seems impossible to find here .",
]
APOLOGY_TAILS = ["another cuisine perhaps ?", "try a different style ?",
                 "happy to widen the search .", "something similar instead ?",
                 "i can look for alternatives .", "other cuisines abound .",
                 "plenty of options remain .", "want me to branch out ?"]


def _apology_sentence(rng, food, area):
    if rng.random() < APOLOGY_DECOR_P:
        return "%s %s" % (rng.choice(APOLOGY_CORES) % food, rng.choice(APOLOGY_TAILS))
    if area:
        return _weighted(rng, [
            (0.55, "i am sorry , there are no %s restaurants in the %s part of town . "
                   "would you like something else ?" % (food, area)),
            (0.45, "unfortunately there are no %s restaurants in the %s area ." % (food, area)),
        ])
    return _weighted(rng, [
        (0.55, "i am sorry , there are no %s restaurants in the area . "
               "would you like something else ?" % food),
        (0.45, "unfortunately i cannot find any %s restaurants ." % food),
    ])


def _offer_sentence(rng, entity, mention):
    """Offer naming the entity and mentioning the informable slots in
    ``mention`` (always includes food)."""
    name, food = entity["name"], entity["food"]
    area, price = entity["area"], entity["pricerange"]
    m = frozenset(mention)
    adj = "nice" if rng.random() < 0.38 else rng.choice(ADJECTIVES)
    if m == frozenset(["food"]):
        core = _weighted(rng, [
            (0.45, "%s is a %s restaurant serving %s food ." % (name, adj, food)),
            (0.17, "how about %s ? they serve %s food ." % (name, food)),
            (0.38, _weighted(rng, SERVE_VERBS).format(name=name, food=food))])
    elif m == frozenset(["food", "area"]):
        core = _weighted(rng, [
            (0.62, "%s is a %s restaurant serving %s food in the %s of town ."
             % (name, adj, food, area)),
            (0.38, "%s serves %s food and is in the %s part of town ." % (name, food, area))])
    elif m == frozenset(["food", "pricerange"]):
        core = _weighted(rng, [
            (0.62, "%s is a %s restaurant serving %s food in the %s price range ."
             % (name, adj, food, price)),
            (0.38, "%s serves %s food and the prices are %s ." % (name, food, price))])
    elif m == frozenset(["food", "area", "pricerange"]):
        core = _weighted(rng, [
            (0.62, "%s is a %s %s restaurant in the %s of town serving %s food ."
             % (name, adj, price, area, food)),
            (0.38, "%s serves %s food , is located in the %s and is in the %s price range ."
             % (name, food, area, price))])
    else:
        core = "%s is a %s restaurant ." % (name, adj)
    if rng.random() < OFFER_SUFFIX_P:
        core = "%s %s" % (core, rng.choice(OFFER_SUFFIXES))
        if rng.random() < 0.15:
            core = "%s %s" % (core, rng.choice(OFFER_SUFFIXES))
    return core


_SINGLE_ANSWERS = {
    "phone": [(0.44, "{name} 's phone number is {phone} ."),
              (0.16, "the phone number is {phone} ."),
              (0.12, "their phone is {phone} ."),
              (0.10, "you can reach {name} at {phone} ."),
              (0.09, "give them a call on {phone} ."),
              (0.09, "the number to dial is {phone} .")],
    "address": [(0.44, "{name} is located at {address} ."),
                (0.16, "the address is {address} ."),
                (0.12, "they are located at {address} ."),
                (0.10, "you will find {name} at {address} ."),
                (0.09, "head over to {address} ."),
                (0.09, "they sit at {address} .")],
    "postcode": [(0.42, "{name} 's postcode is {postcode} ."),
                 (0.24, "the postcode is {postcode} ."),
                 (0.18, "their postcode is {postcode} ."),
                 (0.16, "the postcode there is {postcode} .")],
    "food": [(0.60, "{name} serves {food} food ."),
             (0.40, "they serve {food} cuisine .")],
    "area": [(0.55, "{name} is in the {area} of town ."),
             (0.45, "it is located in the {area} part of town .")],
    "pricerange": [(0.55, "{name} is in the {pricerange} price range ."),
                   (0.45, "the prices there are {pricerange} .")],
}

_PAIR_ANSWERS = {
    frozenset(["phone", "address"]): [
        (0.38, "{name} is located at {address} and their phone is {phone} ."),
        (0.24, "the address is {address} and the phone number is {phone} ."),
        (0.14, "the phone number is {phone} and the address is {address} ."),
        (0.12, "find {name} at {address} , or ring {phone} ."),
        (0.12, "they sit at {address} and answer on {phone} .")],
    frozenset(["phone", "postcode"]): [
        (0.60, "the phone number is {phone} and the postcode is {postcode} ."),
        (0.40, "their phone is {phone} and their postcode is {postcode} .")],
    frozenset(["address", "postcode"]): [
        (0.60, "the address is {address} and the postcode is {postcode} ."),
        (0.40, "they are located at {address} , postcode {postcode} .")],
    frozenset(["area", "phone"]): [
        (0.60, "{name} is in the {area} of town and the phone number is {phone} ."),
        (0.40, "it is in the {area} and you can reach them at {phone} .")],
    frozenset(["area", "address"]): [
        (0.60, "{name} is in the {area} of town at {address} ."),
        (0.40, "they are located at {address} in the {area} .")],
}

_TRIPLE_ANSWER = [
    (0.55, "{name} is located at {address} , phone {phone} , postcode {postcode} ."),
    (0.45, "the address is {address} , the phone number is {phone} and the "
           "postcode is {postcode} ."),
]


def _answer_sentence(rng, entity, slots, anything_else):
    slots = frozenset(slots)
    if len(slots) == 1:
        tmpl = _weighted(rng, _SINGLE_ANSWERS[next(iter(slots))])
    elif slots in _PAIR_ANSWERS:
        tmpl = _weighted(rng, _PAIR_ANSWERS[slots])
    elif slots == frozenset(["phone", "address", "postcode"]):
        tmpl = _weighted(rng, _TRIPLE_ANSWER)
    else:
        # rare mixed sets: chain single-slot clauses
        parts = [_weighted(rng, _SINGLE_ANSWERS[s]) for s in sorted(slots)]
        tmpl = " ".join(parts)
    text = tmpl.format(**entity)
    if rng.random() < ANSWER_PREFIX_P:
        text = "%s %s" % (rng.choice(ANSWER_PREFIXES), text)
    if rng.random() < ANSWER_SUFFIX_P:
        text = "%s %s" % (text, rng.choice(ANSWER_SUFFIXES))
    if anything_else:
        text = "%s %s" % (text, rng.choice(ANYTHING_ELSE_POOL))
    return text


# --------------------------------------------------------------------------
# dialogue scripting
# --------------------------------------------------------------------------

CONSTRAINT_PATTERNS = [
    (0.40, ("food",)),
    (0.20, ("food", "area")),
    (0.15, ("food", "pricerange")),
    (0.06, ("food", "area", "pricerange")),
    (0.08, ("area",)),
    (0.05, ("pricerange",)),
    (0.06, ("area", "pricerange")),
]


def _sample_goal(rng, kb):
    entity = rng.choice(kb)
    slots = _weighted(rng, CONSTRAINT_PATTERNS)
    constraints = {s: entity[s] for s in slots}
    requests = set()
    for slot, p in (("phone", 0.55), ("address", 0.50), ("postcode", 0.15)):
        if rng.random() < p:
            requests.add(slot)
    for slot, p in (("area", 0.18), ("food", 0.08), ("pricerange", 0.08)):
        if slot not in constraints and rng.random() < p:
            requests.add(slot)
    return entity, constraints, requests


def _matching(kb, constraints):
    return [r for r in kb if all(r[s] == v for s, v in constraints.items())]


def generate_dialogue(rng, did, kb):
    """One scripted dialogue in the published schema."""
    entity, constraints, requests = _sample_goal(rng, kb)
    unfinished = rng.random() < UNFINISHED_P
    nomatch = rng.random() < NOMATCH_P

    gamble = None  # (channel, slot) volunteered by the wizard, never asked
    if not unfinished and rng.random() < GAMBLE_P:
        free_informables = [s for s in ("area", "pricerange", "food") if s not in constraints]
        if rng.random() < GAMBLE_OFFER_CHANNEL_P and free_informables:
            slot = rng.choice(free_informables)
            requests.add(slot)
            gamble = ("offer", slot)
        else:
            contact = sorted(requests & {"phone", "address", "postcode"})
            if not contact:
                requests.add("phone")
                contact = ["phone"]
            if len(contact) == 1:
                extra = {"phone": "address", "address": "postcode",
                         "postcode": "phone"}[contact[0]]
                requests.add(extra)
                contact.append(extra)
            slot = rng.choice(sorted(contact))
            gamble = ("answer", slot)

    if unfinished and not requests:
        requests.add(rng.choice(["phone", "address"]))

    turns = []

    def add_turn(usr, informed, requested, sys):
        turns.append({"turn": len(turns),
                      "usr": {"transcript": usr,
                              "slu": {"inform": dict(informed),
                                      "request": sorted(requested)}},
                      "sys": {"sent": sys}})

    def closing(rng):
        text = _weighted(rng, CLOSINGS)
        if rng.random() < CLOSING_DECOR_P:
            text = "%s %s" % (text, rng.choice(CLOSING_SUFFIXES))
        return text

    # opening informs (possibly with an unserved cuisine first)
    slots_order = [s for s in ("food", "area", "pricerange") if s in constraints]
    first_food = constraints.get("food")
    if nomatch:
        if "food" not in constraints:
            constraints["food"] = entity["food"]
            slots_order.insert(0, "food")
        first_food = rng.choice(UNSERVED_FOODS)

    held_back = None
    if len(slots_order) >= 2 and rng.random() < SPLIT_INFORM_P:
        held_back = slots_order[-1]
    opening_slots = [s for s in slots_order if s != held_back]
    opening_values = {s: (first_food if s == "food" else constraints[s])
                      for s in opening_slots}
    prefix = rng.choice(GREETINGS)
    if rng.random() < FLAVOUR_P:
        prefix = ("%s %s" % (prefix, rng.choice(FLAVOUR_PHRASES))).strip()
    opening = ("%s %s" % (prefix, _inform_sentence(rng, opening_values))).strip()

    if unfinished:
        # hang up before the task can complete
        if rng.random() < 0.5 and held_back is not None:
            add_turn(opening, opening_values, [], _ask_sentence(rng, held_back))
        elif nomatch:
            add_turn(opening, opening_values, [],
                     _apology_sentence(rng, first_food, opening_values.get("area")))
        else:
            offer_entity = rng.choice(_matching(kb, constraints))
            add_turn(opening, opening_values, [],
                     _offer_sentence(rng, offer_entity, ["food"]))
        add_turn(rng.choice(NEVERMIND_CLOSINGS), {}, [], closing(rng))
        return {"dialogue_id": did, "finished": False,
                "goal": {"constraints": [[s, v] for s, v in sorted(constraints.items())],
                         "request-slots": sorted(requests)},
                "dial": turns}

    # finished dialogue: informs -> (apology/ask) -> offer -> answers -> close
    if nomatch:
        add_turn(opening, opening_values, [],
                 _apology_sentence(rng, first_food, opening_values.get("area")))
        relax = rng.choice(RELAX_PHRASES) % constraints["food"]
        opening, opening_values = relax, {"food": constraints["food"]}
    if held_back is not None:
        add_turn(opening, opening_values, [], _ask_sentence(rng, held_back))
        opening = _single_inform(rng, held_back, constraints[held_back])
        opening_values = {held_back: constraints[held_back]}
    elif rng.random() < PROBE_P:
        free = [s for s in ("area", "pricerange", "food") if s not in constraints]
        if gamble is not None and gamble[0] == "offer":
            free = [s for s in free if s != gamble[1]]
        if free:
            probe = rng.choice(free)
            add_turn(opening, opening_values, [], _ask_sentence(rng, probe))
            opening = rng.choice(DONTCARE_ANSWERS[probe])
            opening_values = {probe: "dontcare"}

    # the offer
    matches = _matching(kb, constraints)
    offered = entity if entity in matches else rng.choice(matches)
    to_be_asked = set(requests)
    if gamble is not None:
        to_be_asked.discard(gamble[1])
    mention = {"food"}  # offers always name the cuisine
    if gamble is not None and gamble[0] == "offer":
        mention.add(gamble[1])
    else:
        for s in ("area", "pricerange"):
            if s not in to_be_asked and rng.random() < 0.22:
                mention.add(s)
    add_turn(opening, opening_values, [],
             _offer_sentence(rng, offered, sorted(mention)))

    # request/answer turns: informable requests are asked one per turn,
    # contact details possibly bundled
    contact = sorted(to_be_asked & {"phone", "address", "postcode"})
    groups = [[s] for s in sorted(to_be_asked - set(contact))]
    if contact:
        if len(contact) >= 2 and rng.random() < SPLIT_ANSWER_P:
            k = rng.randrange(1, len(contact))
            picked = sorted(rng.sample(contact, k))
            groups.append(picked)
            groups.append([s for s in contact if s not in picked])
        else:
            groups.append(contact)
    dump_at = None
    if gamble is not None and gamble[0] == "answer":
        dump_at = rng.randrange(len(groups)) if groups else None
    for gi, group in enumerate(groups):
        supply = set(group)
        if dump_at == gi:
            supply.add(gamble[1])
        elif rng.random() < SPONTANEOUS_DUMP_P:
            spare = [s for s in ("phone", "address", "postcode")
                     if s not in supply and s not in requests]
            if spare:
                supply.add(rng.choice(spare))
        add_turn(_request_sentence(rng, group), {}, group,
                 _answer_sentence(rng, offered, supply,
                                  rng.random() < ANYTHING_ELSE_P))
    if gamble is not None and gamble[0] == "answer" and dump_at is None:
        # no explicit request turns: the wizard volunteers in a fresh turn
        add_turn(rng.choice(EXTRA_THANKS), {}, [],
                 _answer_sentence(rng, offered, {gamble[1]}, True))

    if rng.random() < EXTRA_THANKS_P:
        add_turn(rng.choice(EXTRA_THANKS), {}, [], _pleasantry(rng))
        add_turn(rng.choice(NO_THATS_ALL), {}, [], closing(rng))
    else:
        add_turn(rng.choice(THANKS_CLOSINGS), {}, [], closing(rng))

    return {"dialogue_id": did, "finished": True,
            "goal": {"constraints": [[s, v] for s, v in sorted(constraints.items())],
                     "request-slots": sorted(requests)},
            "dial": turns}


def generate_dataset(seed=20200):
    rng = random.Random(seed)
    ontology = build_ontology()
    kb = build_kb(rng)
    dialogues = [generate_dialogue(rng, "synthetic-%04d" % i, kb)
                 for i in range(N_DIALOGUES)]
    return ontology, kb, dialogues


def write_dataset(outdir, seed=20200):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    ontology, kb, dialogues = generate_dataset(seed)
    with open(outdir / "ontology.json", "w") as f:
        json.dump(ontology, f, indent=1)
    with open(outdir / "database.json", "w") as f:
        json.dump(kb, f, indent=1)
    with open(outdir / "dialogues.json", "w") as f:
        json.dump(dialogues, f, indent=1)
    n_turns = sum(len(d["dial"]) for d in dialogues)
    return {"dialogues": len(dialogues), "turns": n_turns,
            "restaurants": len(kb),
            "finished": sum(1 for d in dialogues if d["finished"])}
