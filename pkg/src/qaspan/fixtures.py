"""A small hand-annotated corpus with planted factual errors.

Summaries are written in a compact markup: ``word/UPOS`` tokens with an
optional error suffix (``/e`` extrinsic, ``/i`` intrinsic, ``/w`` world
knowledge), and candidate spans opened by ``[NP`` or ``[NE:LABEL`` and
closed by ``]``. Spans may nest.
"""
from __future__ import annotations

from pathlib import Path

from .annotate import PairAnnotation, RawSpan, save_annotations
from .corpus import AnnotatedPair, Dataset, save_dataset, tokens_from_words

_ERR = {"e": "extrinsic", "i": "intrinsic", "w": "world_knowledge"}

FIXTURE_PAIRS = [
    ("fx01",
     "Margaret Hill collects matchbox labels and keeps them in albums at her home in Kent. "
     "Her favourite label came from a Swedish factory.",
     "[NE:PERSON Margaret/PROPN Hill/PROPN ] has/AUX been/AUX collecting/VERB [NP matchbox/NOUN labels/NOUN ] "
     "for/ADP/e [NP the/DET/e past/ADJ/e 15/NUM/e years/NOUN/e ] ./PUNCT"),
    ("fx02",
     "John Smith visited Paris in 2019. He spent a week at the Louvre.",
     "[NE:PERSON John/PROPN Smith/PROPN ] visited/VERB [NE:GPE London/PROPN/e ] in/ADP [NE:DATE 2019/NUM ] ./PUNCT"),
    ("fx03",
     "Strong winds and heavy rain caused flooding at a theme park in Derbyshire on Friday. "
     "The park said it would close for the weekend. Staff were clearing the car park.",
     "[NP high/ADJ/e winds/NOUN ] and/CCONJ [NP heavy/ADJ rain/NOUN ] have/AUX caused/VERB [NP flooding/NOUN ] "
     "at/ADP [NP a/DET derbyshire/PROPN theme/NOUN park/NOUN ] ,/PUNCT/e forcing/VERB/e [NP it/PRON ] "
     "to/PART/e close/VERB/e for/ADP [NP the/DET weekend/NOUN ] ./PUNCT"),
    ("fx04",
     "The government has given a £2m boost to plans for a new hospital. The hospital will be built in Exeter. "
     "Work is expected to start next year.",
     "[NP Plans/NOUN ] to/PART build/VERB [NP a/DET new/ADJ hospital/NOUN ] in/ADP/e [NE:GPE Somerset/PROPN/e ] "
     "have/AUX been/AUX given/VERB [NP a/DET £3m/NUM/e boost/NOUN ] by/ADP [NP the/DET government/NOUN ] ./PUNCT"),
    ("fx05",
     "The city council approved a new cycle lane on Monday. The lane will run along the river and open in June.",
     "[NP The/DET city/NOUN council/NOUN ] approved/VERB [NP a/DET new/ADJ cycle/NOUN lane/NOUN ] on/ADP "
     "[NE:DATE Monday/PROPN ] ./PUNCT"),
    ("fx06",
     "Manchester United beat Chelsea 2-1 at Old Trafford. Marcus Rashford scored the winning goal in the second half.",
     "[NE:PERSON Marcus/PROPN Rashford/PROPN ] scored/VERB [NP the/DET winning/ADJ goal/NOUN ] against/ADP "
     "[NE:ORG Manchester/PROPN/i United/PROPN/i ] ./PUNCT"),
    ("fx07",
     "The prime minister visited a factory in Sunderland. He praised the workers for their efforts.",
     "[NP Prime/PROPN/w Minister/PROPN/w [NE:PERSON Boris/PROPN/w Johnson/PROPN/w ] ] visited/VERB "
     "[NP a/DET factory/NOUN ] in/ADP [NE:GPE Sunderland/PROPN ] ./PUNCT"),
    ("fx08",
     "A Japan Railway maglev train hit 603 kilometers per hour on an experimental track in Yamanashi on Tuesday. "
     "The train spent 10.8 seconds above 600 km per hour.",
     "[NP A/DET [NE:ORG Japan/PROPN Railway/PROPN ] maglev/NOUN train/NOUN ] hit/VERB "
     "[NE:QUANTITY 603/NUM kilometers/NOUN ] per/ADP [NP hour/NOUN ] on/ADP [NP an/DET experimental/ADJ track/NOUN ] "
     "./PUNCT"),
    ("fx09",
     "Heavy rain caused flooding in Norfolk and Lincolnshire on Sunday. "
     "Roads were also closed in Cambridgeshire after a river burst its banks.",
     "[NP Heavy/ADJ rain/NOUN ] has/AUX caused/VERB [NP flooding/NOUN ] in/ADP [NE:GPE Cambridgeshire/PROPN ] ./PUNCT"),
    ("fx10",
     "The charity raised money for the local hospice with a sponsored walk. "
     "Around 200 people took part in the event in Bristol.",
     "[NP The/DET charity/NOUN ] raised/VERB [NE:MONEY £5,000/NUM/e ] for/ADP [NP the/DET local/ADJ hospice/NOUN ] "
     "./PUNCT"),
    ("fx11",
     "Scientists at the University of Leeds have discovered a new species of frog in Peru. "
     "The tiny frog is smaller than a fingernail.",
     "[NP Scientists/NOUN ] have/AUX discovered/VERB [NP a/DET new/ADJ species/NOUN ] of/ADP [NP frog/NOUN ] "
     "in/ADP [NE:GPE Peru/PROPN ] ./PUNCT"),
    ("fx12",
     "A fire broke out at a fuel recycling plant in Manchester. "
     "The environment agency said the site's permit had been suspended.",
     "[NP An/DET environmental/ADJ permit/NOUN ] has/AUX/e been/AUX/e revoked/VERB/e following/VERB/e "
     "[NP a/DET fire/NOUN ] at/ADP/e [NP a/DET fuel/NOUN recycling/NOUN plant/NOUN ] in/ADP/e "
     "[NE:GPE Manchester/PROPN ] ./PUNCT/e"),
    ("fx13",
     "The museum in York will reopen on Saturday after a two-year refurbishment. "
     "Visitors can see a Viking longship in the new gallery.",
     "[NP The/DET museum/NOUN ] in/ADP [NE:GPE York/PROPN ] will/AUX reopen/VERB on/ADP [NE:DATE Saturday/PROPN ] "
     "./PUNCT"),
    ("fx14",
     "The festival in Cardiff was cancelled on Friday because of storms. "
     "Organisers hope to hold it again on Saturday next year.",
     "[NP The/DET festival/NOUN ] in/ADP [NE:GPE Cardiff/PROPN ] was/AUX cancelled/VERB on/ADP "
     "[NE:DATE Saturday/PROPN/i ] ./PUNCT"),
    ("fx15",
     "A teenager from Glasgow has won a national poetry prize. Her poem about the sea was chosen from 3,000 entries.",
     "[NP A/DET teenager/NOUN ] from/ADP [NE:GPE Edinburgh/PROPN/e ] has/AUX won/VERB "
     "[NP a/DET national/ADJ poetry/NOUN prize/NOUN ] ./PUNCT"),
    ("fx16",
     "Police in Cornwall are searching for a missing walker. The man was last seen near Bodmin Moor on Sunday evening.",
     "[NP Police/NOUN ] in/ADP [NE:GPE Cornwall/PROPN ] are/AUX searching/VERB for/ADP "
     "[NP a/DET missing/ADJ walker/NOUN ] ./PUNCT [NP The/DET man/NOUN ] was/AUX last/ADV seen/VERB near/ADP "
     "[NE:LOC Bodmin/PROPN Moor/PROPN ] ./PUNCT"),
    ("fx17",
     "A rare painting by Turner has been sold at auction in London. The buyer has not been named.",
     "[NP A/DET rare/ADJ painting/NOUN ] by/ADP [NE:PERSON Turner/PROPN ] has/AUX been/AUX sold/VERB for/ADP/e "
     "[NE:MONEY £2m/NUM/e ] at/ADP [NP auction/NOUN ] ./PUNCT"),
    ("fx18",
     "The airline will add flights between Belfast and Rome this summer. Tickets go on sale next week.",
     "[NP The/DET airline/NOUN ] will/AUX add/VERB [NP flights/NOUN ] between/ADP [NE:GPE Belfast/PROPN ] "
     "and/CCONJ [NE:GPE Rome/PROPN ] ./PUNCT"),
    ("fx19",
     "Thousands of runners took part in the marathon in Brighton on Sunday. "
     "Kenyan athlete Peter Kiprop won the men's race in two hours.",
     "[NE:PERSON Peter/PROPN Kiprop/PROPN ] won/VERB [NP the/DET women/NOUN/i 's/PART/i race/NOUN ] in/ADP "
     "[NE:GPE Brighton/PROPN ] for/ADP/e [NP the/DET third/ADJ/e time/NOUN/e ] ./PUNCT"),
    ("fx20",
     "The zoo in Chester has welcomed a baby giraffe. The calf was born on Tuesday and is doing well.",
     "[NP The/DET zoo/NOUN ] in/ADP [NE:GPE Chester/PROPN ] has/AUX welcomed/VERB [NP a/DET baby/NOUN giraffe/NOUN ] "
     "./PUNCT"),
    ("fx21",
     "A bridge over the River Severn will close for repairs in March. Drivers are advised to use other routes.",
     "[NP A/DET bridge/NOUN ] over/ADP [NE:LOC the/DET River/PROPN Thames/PROPN/e ] will/AUX close/VERB for/ADP "
     "[NP repairs/NOUN ] in/ADP [NE:DATE March/PROPN ] ./PUNCT"),
    ("fx22",
     "A library in Norwich has lent out its millionth book. The book was a novel by Jane Austen.",
     "[NP A/DET library/NOUN ] in/ADP [NE:GPE Norwich/PROPN ] has/AUX lent/VERB out/ADP "
     "[NP its/PRON millionth/ADJ book/NOUN ] ./PUNCT"),
    ("fx23",
     "The singer released her new album on Friday. It has already topped the charts in Ireland.",
     "[NP The/DET singer/NOUN ] released/VERB [NP her/PRON new/ADJ album/NOUN ] on/ADP [NE:DATE Friday/PROPN ] "
     "./PUNCT [NP It/PRON ] has/AUX topped/VERB [NP the/DET charts/NOUN ] in/ADP [NE:GPE Scotland/PROPN/e ] ./PUNCT"),
]


def parse_markup(pair_id: str, document: str, markup: str, dataset: str = "fixture",
                 model: str = "") -> tuple[AnnotatedPair, PairAnnotation]:
    words, labels, pos, etypes = [], [], [], []
    open_spans: list[tuple[int, str, str]] = []
    spans: list[tuple[int, int, str, str]] = []
    for item in markup.split():
        if item.startswith("["):
            tag = item[1:]
            kind, _, label = tag.partition(":")
            open_spans.append((len(words), kind, label))
        elif item == "]":
            start, kind, label = open_spans.pop()
            spans.append((start, len(words), kind, label))
        else:
            parts = item.split("/")
            if len(parts) == 2:
                w, p, err = parts[0], parts[1], None
            else:
                w, p, err = parts[0], parts[1], parts[2]
            words.append(w)
            pos.append(p)
            labels.append(0 if err else 1)
            etypes.append(_ERR[err] if err else "none")
    if open_spans:
        raise ValueError(f"{pair_id}: unclosed span")
    summary, tokens = tokens_from_words(words, labels, pos, etypes)
    raw = [RawSpan(tokens[a].start, tokens[b - 1].end, kind, label) for a, b, kind, label in spans]
    raw.sort(key=lambda s: (s.start, s.end))
    ann = PairAnnotation(raw, [(t.start, t.end, t.pos) for t in tokens])
    pair = AnnotatedPair(pair_id, document, summary, tokens, dataset, model)
    pair.validate()
    return pair, ann


def build_fixture() -> tuple[Dataset, dict[str, PairAnnotation]]:
    """The fixture corpus plus its annotation cache."""
    pairs, anns = [], {}
    for i, (pid, doc, markup) in enumerate(FIXTURE_PAIRS):
        pair, ann = parse_markup(pid, doc, markup, model="bart" if i % 2 == 0 else "pegasus")
        pairs.append(pair)
        anns[pid] = ann
    return Dataset("fixture", pairs), anns


def write_fixture(directory) -> tuple[Path, Path]:
    directory = Path(directory)
    dataset, anns = build_fixture()
    ds_path, ann_path = directory / "fixture.jsonl", directory / "fixture.annotations.jsonl"
    save_dataset(dataset, ds_path)
    save_annotations(anns, ann_path)
    return ds_path, ann_path
