#!/usr/bin/env python3
"""Regenerate the synthetic fixture corpora under assets/fixtures/.

Sentences are template-generated; none come from a real corpus. Output is
deterministic, so re-running leaves the committed files unchanged.
"""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "assets" / "fixtures"

SCIENTIFIC = {
    "Background": [
        "Previous studies have established that {t} governs much of the behaviour observed in {f}.",
        "Over the past decade, {t} has attracted considerable attention within {f}.",
        "It is widely accepted that {t} is a central concern in {f}.",
        "Earlier theoretical work linked {t} to long-standing questions in {f}.",
        "Several groups have reported on {t}, although its role in {f} remains debated.",
        "The literature on {f} contains numerous accounts of {t}.",
        "Classical models of {f} treat {t} as a secondary effect.",
        "{T} has been studied extensively in the context of {f}.",
        "Much of the existing knowledge about {f} derives from early measurements of {t}.",
        "Reviews of {f} commonly describe {t} as a well-characterised phenomenon.",
    ],
    "Motivation": [
        "However, the contribution of {t} to {f} has never been quantified, which motivates the present work.",
        "The aim of this study is to clarify how {t} affects {f}.",
        "We set out to determine whether {t} can be controlled in {f}.",
        "A key open problem is that {t} is poorly understood in {f}.",
        "Our goal is to close the gap between theory and experiment regarding {t} in {f}.",
        "This work addresses the question of why {t} varies so strongly across {f}.",
        "Understanding {t} is important because it limits progress in {f}.",
        "We hypothesise that {t} is the dominant factor in {f}.",
        "The objective here is to establish a reliable description of {t} for {f}.",
        "Resolving the controversy surrounding {t} would benefit the wider field of {f}.",
    ],
    "Method": [
        "Samples were prepared by combining the precursors and measuring {t} at room temperature for {f}.",
        "We used a density functional approach to compute {t} relevant to {f}.",
        "Spectra were recorded with a calibrated instrument to monitor {t} in {f}.",
        "The data were analysed with a least-squares fit to extract {t} for {f}.",
        "Each experiment was repeated three times to estimate {t} within {f}.",
        "A custom flow cell was built to track {t} during {f} experiments.",
        "Simulations of {t} were carried out using periodic boundary conditions for {f}.",
        "We collected measurements of {t} over a range of temperatures relevant to {f}.",
        "The protocol for quantifying {t} followed a standard titration procedure used in {f}.",
        "Crystals were grown from solution and {t} was probed by diffraction for {f}.",
    ],
    "Result": [
        "The measured {t} increased by a factor of two across the series studied in {f}.",
        "Table 2 lists the values of {t} obtained for each sample in {f}.",
        "We observed a sharp transition in {t} at the highest loading for {f}.",
        "The fitted {t} agrees with the computed value to within five percent for {f}.",
        "No significant change in {t} was detected after annealing in {f}.",
        "Figure 3 shows that {t} scales linearly with concentration in {f}.",
        "The calculations yield a {t} that is markedly lower than expected for {f}.",
        "Statistical analysis revealed a strong correlation between {t} and yield in {f}.",
        "In all cases {t} remained stable over the full measurement window for {f}.",
        "The largest {t} was found for the smallest particles examined in {f}.",
    ],
    "Conclusion": [
        "Therefore, {t} can be regarded as the main driver of the effects seen in {f}.",
        "These findings suggest that controlling {t} opens new opportunities in {f}.",
        "In summary, our work shows that {t} must be accounted for in models of {f}.",
        "Future studies should explore how {t} generalises to other systems in {f}.",
        "Taken together, the evidence indicates that {t} is less important in {f} than assumed.",
        "This study demonstrates that {t} offers a practical handle for tuning {f}.",
        "Our interpretation implies that {t} should be revisited in existing theories of {f}.",
        "We conclude that {t} provides a consistent explanation for the trends in {f}.",
        "The implications of {t} for the design of new materials in {f} are significant.",
        "Overall, the insights into {t} contribute to a clearer picture of {f}.",
    ],
}
SCI_TOPICS = [
    ("charge transfer", "organic photovoltaics"),
    ("proton mobility", "fuel cell membranes"),
    ("ligand exchange", "coordination chemistry"),
    ("surface adsorption", "heterogeneous catalysis"),
    ("phase separation", "polymer blends"),
    ("spin crossover", "molecular magnetism"),
    ("solvent polarity", "reaction kinetics"),
    ("lattice strain", "perovskite films"),
    ("hydrogen bonding", "supramolecular assembly"),
    ("electron correlation", "transition metal oxides"),
]
# Dataset-side category names used by some records; resolved through the
# scheme's alias table when loading.
SCI_ALIASES = {"Motivation": "Objective", "Method": "Methods", "Result": "Results"}

FINANCIAL = {
    "Financial": [
        "Net revenue from {t} rose to $4.2 billion, reflecting stronger pricing in {f}.",
        "We repaid $500 million of senior notes related to {t} during the year in {f}.",
        "Operating cash flow from {t} was sufficient to fund dividends across {f}.",
        "Interest expense on borrowings for {t} increased due to higher rates in {f}.",
        "The company recorded an impairment charge on its {t} investments in {f}.",
        "Gross margin attributable to {t} declined by 120 basis points in {f}.",
        "We maintain a revolving credit facility to finance {t} across {f}.",
        "Foreign exchange movements reduced reported earnings from {t} in {f}.",
        "Capital returned to shareholders from {t} totaled $1.1 billion in {f}.",
        "Accounts receivable tied to {t} grew in line with sales in {f}.",
    ],
    "Manufactured": [
        "We operate three bottling plants dedicated to {t} serving {f}.",
        "The new distribution center for {t} expands warehouse capacity in {f}.",
        "Our fleet of delivery trucks supports {t} throughout {f}.",
        "Production lines for {t} were retooled to increase throughput in {f}.",
        "The refinery that processes {t} underwent scheduled maintenance in {f}.",
        "We own the headquarters building and lease several facilities for {t} in {f}.",
        "Investments in pipelines improved transport of {t} across {f}.",
        "Data center equipment supporting {t} was upgraded in {f}.",
        "Manufacturing equipment for {t} is depreciated over ten years in {f}.",
        "The port terminal handling {t} reached full operational capacity in {f}.",
    ],
    "Intellectual": [
        "We hold more than 200 patents covering {t} used in {f}.",
        "Our proprietary software for {t} is a key differentiator in {f}.",
        "Research and development spending on {t} increased in {f}.",
        "We license trademarks associated with {t} to partners in {f}.",
        "Trade secrets relating to {t} are protected through confidentiality agreements in {f}.",
        "The brand formulas for {t} are known to only a small group in {f}.",
        "We acquired a portfolio of copyrights related to {t} for {f}.",
        "Our internal processes for {t} are documented in a knowledge base used in {f}.",
        "Innovation in {t} remains central to our competitive position in {f}.",
        "We rely on licensed technology to deliver {t} in {f}.",
    ],
    "Human": [
        "We employed approximately 6,000 people working on {t} in {f}.",
        "Employee training programs focused on {t} were expanded in {f}.",
        "We compete for talent with experience in {t} across {f}.",
        "Our workforce supporting {t} is covered by collective bargaining agreements in {f}.",
        "The health and safety of employees handling {t} is our priority in {f}.",
        "Recruitment of engineers specialising in {t} accelerated in {f}.",
        "Staff turnover among teams responsible for {t} declined in {f}.",
        "We offer equity awards to retain key personnel in {t} across {f}.",
        "Leadership development for managers overseeing {t} continued in {f}.",
        "Diversity and inclusion initiatives reached employees working on {t} in {f}.",
    ],
    "Social and relationship": [
        "We work closely with independent distributors of {t} in {f}.",
        "Customer loyalty to our {t} offerings strengthened in {f}.",
        "We partner with local communities affected by {t} in {f}.",
        "Relationships with key suppliers of {t} are critical in {f}.",
        "The regulator approved our rate review for {t} in {f}.",
        "We engage with stakeholders on the social impact of {t} in {f}.",
        "Our reputation for {t} depends on consumer trust in {f}.",
        "Charitable contributions linked to {t} supported schools in {f}.",
        "Agreements with retail partners expanded distribution of {t} in {f}.",
        "Community outreach programs around {t} continued in {f}.",
    ],
    "Natural": [
        "Water used in producing {t} is sourced from aquifers in {f}.",
        "We reduced greenhouse gas emissions from {t} operations in {f}.",
        "Wind generation projects will supply renewable energy for {t} in {f}.",
        "Droughts could limit agricultural inputs for {t} in {f}.",
        "We committed to restoring land disturbed by {t} in {f}.",
        "Recycled aluminum now accounts for most packaging of {t} in {f}.",
        "Biodiversity assessments were completed at sites producing {t} in {f}.",
        "Mineral reserves supporting {t} are estimated annually in {f}.",
        "Air quality permits govern emissions from {t} facilities in {f}.",
        "Climate-related risks to {t} are evaluated in our sustainability review for {f}.",
    ],
}
FIN_TOPICS = [
    ("energy drinks", "North America"),
    ("streaming content", "the EMEA region"),
    ("crude oil", "the Permian Basin"),
    ("architectural coatings", "Latin America"),
    ("cloud services", "Asia Pacific"),
    ("electric utilities", "Missouri"),
    ("consumer electronics", "Europe"),
    ("packaged beverages", "the domestic segment"),
    ("specialty chemicals", "international markets"),
    ("online retail", "the United States"),
]


def fill(template, topic, field):
    return template.format(t=topic, T=topic[0].upper() + topic[1:], f=field)


def scientific():
    rows = []
    for label, templates in SCIENTIFIC.items():
        n = 0
        for ti, tpl in enumerate(templates):
            for topic, field in SCI_TOPICS:
                dataset_label = label
                if label in SCI_ALIASES and n % 2 == 1:
                    dataset_label = SCI_ALIASES[label]
                rows.append({
                    "id": f"sci-{label[:3].lower()}-{n:03d}",
                    "text": fill(tpl, topic, field),
                    "label": dataset_label,
                    "source": f"synthetic-paper-{ti:02d}",
                    "domain": "scientific",
                })
                n += 1
    return rows


def financial():
    rows = []
    for label, templates in FINANCIAL.items():
        n = 0
        slug = label.split()[0][:3].lower()
        for ti, tpl in enumerate(templates):
            for topic, field in FIN_TOPICS:
                rows.append({
                    "id": f"fin-{slug}-{n:03d}",
                    "text": fill(tpl, topic, field),
                    "label": label,
                    "source": f"synthetic-10k-{ti:02d}",
                    "domain": "financial",
                })
                n += 1
    return rows


def annotations(fin_rows):
    """Three synthetic annotators who mostly agree with the template label."""
    rng = random.Random(20231016)
    labels = list(FINANCIAL)
    items = []
    picks = [r for i, r in enumerate(fin_rows) if i % 10 == 3]
    for row in picks:
        ann = {}
        for name, reliability in (("A1", 0.8), ("A2", 0.7), ("A3", 0.6)):
            roll = rng.random()
            if roll < 0.05:
                chosen = []
            elif roll < reliability:
                chosen = [row["label"]]
            else:
                chosen = [rng.choice(labels)]
            if chosen and rng.random() < 0.25:
                extra = rng.choice(labels)
                if extra not in chosen:
                    chosen.append(extra)
            ann[name] = chosen
        items.append({"id": row["id"], "text": row["text"], "annotators": ann})
    return items


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    sci = scientific()
    fin = financial()
    assert len({r["text"] for r in sci}) == len(sci) == 500
    assert len({r["text"] for r in fin}) == len(fin) == 600
    write_jsonl(OUT / "scientific_sentences.jsonl", sci)
    write_jsonl(OUT / "financial_sentences.jsonl", fin)
    write_jsonl(OUT / "financial_annotations.jsonl", annotations(fin))


if __name__ == "__main__":
    main()
