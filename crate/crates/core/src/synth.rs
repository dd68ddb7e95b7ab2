//! Deterministic synthetic clinical corpus with known ground truth.
//!
//! Paragraphs are assembled from template sentences around one condition.
//! Flagged paragraphs carry exactly one single-word swap in the diagnosis,
//! treatment or investigation sentence; the swapped-in word is drawn from a
//! pool that never appears in a correct sentence. A fraction of the test
//! records are near-duplicates of training records (the patient's age is
//! changed), which is where extractive correction is expected to fire.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{render_numbered_sentences, parse_numbered_sentences, ClinicalRecord, IndexedSentence, NA};

struct Condition {
    symptoms: &'static [&'static str],
    exam: &'static [&'static str],
    test: &'static str,
    /// Investigation sentence; `{}` is the key word.
    result: &'static str,
    result_word: &'static str,
    result_wrong: &'static str,
    dx: &'static str,
    dx_wrong: &'static str,
    drug: &'static str,
    drug_wrong: &'static str,
    dose: &'static [&'static str],
}

const CONDITIONS: &[Condition] = &[
    Condition {
        symptoms: &["productive cough and fever", "fever, rigors and pleuritic chest pain", "three days of cough with green sputum"],
        exam: &["coarse crackles at the right base", "bronchial breathing over the left lower zone"],
        test: "A chest radiograph",
        result: "showed lobar {} on the affected side",
        result_word: "consolidation",
        result_wrong: "pneumoperitoneum",
        dx: "pneumonia",
        dx_wrong: "cholecystitis",
        drug: "amoxicillin",
        drug_wrong: "levothyroxine",
        dose: &["500 mg three times daily", "1 g three times daily"],
    },
    Condition {
        symptoms: &["polyuria and polydipsia", "weight loss with excessive thirst", "fatigue and frequent urination"],
        exam: &["dry mucous membranes", "acanthosis nigricans on the neck"],
        test: "Laboratory testing",
        result: "revealed an elevated {} level",
        result_word: "glucose",
        result_wrong: "troponin",
        dx: "diabetes",
        dx_wrong: "sarcoidosis",
        drug: "metformin",
        drug_wrong: "warfarin",
        dose: &["500 mg twice daily", "850 mg once daily"],
    },
    Condition {
        symptoms: &["heat intolerance and palpitations", "tremor, sweating and weight loss", "anxiety with palpitations"],
        exam: &["a diffuse goitre and fine tremor", "lid lag and warm moist skin"],
        test: "Thyroid function tests",
        result: "showed a suppressed {} concentration",
        result_word: "TSH",
        result_wrong: "lipase",
        dx: "hyperthyroidism",
        dx_wrong: "nephrolithiasis",
        drug: "carbimazole",
        drug_wrong: "furosemide",
        dose: &["20 mg daily", "15 mg daily"],
    },
    Condition {
        symptoms: &["crushing central chest pain", "chest pain radiating to the left arm", "chest tightness with sweating"],
        exam: &["a pale and clammy appearance", "a soft fourth heart sound"],
        test: "An electrocardiogram",
        result: "showed {} in the inferior leads",
        result_word: "ST-elevation",
        result_wrong: "delta-waves",
        dx: "myocardial infarction",
        dx_wrong: "myocardial amyloidosis",
        drug: "aspirin",
        drug_wrong: "prednisolone",
        dose: &["300 mg as a loading dose", "300 mg once"],
    },
    Condition {
        symptoms: &["wheeze and breathlessness", "nocturnal cough and chest tightness", "episodic shortness of breath"],
        exam: &["a widespread polyphonic wheeze", "a prolonged expiratory phase"],
        test: "Spirometry",
        result: "demonstrated reversible {} airflow limitation",
        result_word: "obstructive",
        result_wrong: "hemolytic",
        dx: "asthma",
        dx_wrong: "tuberculosis",
        drug: "salbutamol",
        drug_wrong: "allopurinol",
        dose: &["two puffs as required", "100 micrograms as required"],
    },
    Condition {
        symptoms: &["dysuria and urinary frequency", "suprapubic pain with burning micturition", "cloudy urine and urgency"],
        exam: &["suprapubic tenderness", "mild suprapubic discomfort on palpation"],
        test: "Urine dipstick",
        result: "was positive for {} and leukocytes",
        result_word: "nitrites",
        result_wrong: "ketones",
        dx: "cystitis",
        dx_wrong: "pericarditis",
        drug: "nitrofurantoin",
        drug_wrong: "digoxin",
        dose: &["100 mg twice daily", "50 mg four times daily"],
    },
    Condition {
        symptoms: &["painful vesicles on the lips", "fever and painful oral ulcers", "a tingling sore at the mouth corner"],
        exam: &["clustered vesicles on the lower lip", "gingival swelling with shallow ulcers"],
        test: "A viral swab",
        result: "was positive for herpes {} on PCR",
        result_word: "simplex",
        result_wrong: "zoster",
        dx: "herpetic gingivostomatitis",
        dx_wrong: "herpetic hepatitis",
        drug: "acyclovir",
        drug_wrong: "oseltamivir",
        dose: &["200 mg five times daily", "400 mg three times daily"],
    },
    Condition {
        symptoms: &["a painful swollen first toe", "sudden pain in the big toe overnight", "an exquisitely tender toe joint"],
        exam: &["an erythematous swollen first metatarsophalangeal joint", "a hot tender toe joint"],
        test: "Joint aspiration",
        result: "showed negatively birefringent {} crystals",
        result_word: "urate",
        result_wrong: "cholesterol",
        dx: "acute gout",
        dx_wrong: "acute sinusitis",
        drug: "colchicine",
        drug_wrong: "insulin",
        dose: &["500 micrograms twice daily", "500 micrograms three times daily"],
    },
    Condition {
        symptoms: &["unilateral leg swelling", "calf pain after a long flight", "a swollen tender left calf"],
        exam: &["pitting oedema of the left leg", "calf tenderness with dilated superficial veins"],
        test: "A compression ultrasound",
        result: "confirmed a {} thrombus in the popliteal vein",
        result_word: "non-compressible",
        result_wrong: "calcified",
        dx: "deep vein thrombosis",
        dx_wrong: "deep vein aneurysm",
        drug: "apixaban",
        drug_wrong: "amlodipine",
        dose: &["10 mg twice daily", "10 mg twice daily for seven days"],
    },
    Condition {
        symptoms: &["headache, neck stiffness and photophobia", "fever with confusion and headache", "a severe headache with vomiting"],
        exam: &["a positive Kernig sign", "neck stiffness and a petechial rash"],
        test: "Lumbar puncture",
        result: "showed turbid fluid with {} predominance",
        result_word: "neutrophil",
        result_wrong: "eosinophil",
        dx: "bacterial meningitis",
        dx_wrong: "bacterial endocarditis",
        drug: "ceftriaxone",
        drug_wrong: "sertraline",
        dose: &["2 g twice daily", "2 g intravenously twice daily"],
    },
    Condition {
        symptoms: &["periumbilical pain moving to the right iliac fossa", "anorexia with right lower abdominal pain", "abdominal pain and low grade fever"],
        exam: &["guarding in the right iliac fossa", "rebound tenderness at McBurney point"],
        test: "An abdominal CT scan",
        result: "showed a dilated {} appendix",
        result_word: "inflamed",
        result_wrong: "atrophic",
        dx: "appendicitis",
        dx_wrong: "psoriasis",
        drug: "cefuroxime",
        drug_wrong: "methotrexate",
        dose: &["1.5 g intravenously", "750 mg intravenously three times daily"],
    },
    Condition {
        symptoms: &["fatigue and exertional breathlessness", "pallor and tiredness", "dizziness with heavy menstrual bleeding"],
        exam: &["conjunctival pallor", "koilonychia and angular cheilitis"],
        test: "A full blood count",
        result: "showed a {} anaemia with low ferritin",
        result_word: "microcytic",
        result_wrong: "macrocytic",
        dx: "iron deficiency anaemia",
        dx_wrong: "iron deficiency thrombocytosis",
        drug: "ferrous sulfate",
        drug_wrong: "lithium sulfate",
        dose: &["200 mg once daily", "200 mg on alternate days"],
    },
];

const FEMALE: &[&str] = &["Anna", "Maria", "Grace", "Leila", "Sofia", "Ruth", "Nadia", "Helen", "Priya", "Joan", "Chloe", "Irene"];
const MALE: &[&str] = &["James", "Omar", "Peter", "Arjun", "Lucas", "Samuel", "Victor", "Hugo", "Kenji", "Tomas", "Felix", "Daniel"];
const SETTINGS: &[&str] = &["emergency department", "general practice clinic", "urgent care centre", "medical assessment unit", "outpatient clinic"];
const COMORBIDITIES: &[&str] = &[
    "hypertension", "hyperlipidaemia", "obesity", "depression", "chronic kidney disease", "osteoporosis",
    "glaucoma", "eczema", "irritable bowel syndrome", "hypothyroidism", "atrial fibrillation", "benign prostatic hyperplasia",
];
const JOBS: &[&str] = &["teacher", "bus driver", "nurse", "accountant", "farmer", "chef", "electrician", "librarian", "retired engineer", "shop assistant"];
const REGULAR_MEDS: &[&str] = &[
    "atorvastatin", "ramipril", "omeprazole", "bisoprolol", "latanoprost", "alendronate",
    "tamsulosin", "citalopram", "simvastatin", "lansoprazole", "emollients", "paracetamol",
];
const ALLERGENS: &[&str] = &["penicillin", "codeine", "latex", "shellfish", "sulfonamides", "trimethoprim"];
const ONSET_CONTEXT: &[&str] = &[
    "after a viral illness", "while travelling abroad", "without any obvious trigger",
    "after starting a new job", "following a family gathering", "during a busy week at work",
];
const CLINICS: &[&str] = &["the general practitioner", "the respiratory team", "the medical clinic", "the specialist nurse", "the community team"];

/// Which sentence of a flagged paragraph carries the swap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorSlot {
    Investigation,
    Diagnosis,
    Treatment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub flagged_fraction: f64,
    pub near_duplicate_fraction: f64,
    /// Number sentences with a random permutation instead of `0..n`.
    pub shuffle_indices: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            n_train: 500,
            n_test: 200,
            flagged_fraction: 0.5,
            near_duplicate_fraction: 0.4,
            shuffle_indices: false,
        }
    }
}

/// Generator-side ground truth beyond the dataset columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthLabel {
    pub text_id: String,
    pub error_slot: Option<ErrorSlot>,
    pub near_duplicate_of: Option<String>,
    /// Near-duplicate of a flagged training record: extraction should fire.
    pub expected_extractive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub train: Vec<ClinicalRecord>,
    pub test: Vec<ClinicalRecord>,
    pub train_labels: Vec<SynthLabel>,
    pub test_labels: Vec<SynthLabel>,
}

/// `(wrong, right)` word pairs for every swap the generator can make.
pub fn swap_pairs() -> Vec<(&'static str, &'static str)> {
    CONDITIONS
        .iter()
        .flat_map(|c| [(c.result_wrong, c.result_word), (c.dx_wrong, c.dx), (c.drug_wrong, c.drug)])
        .collect()
}

struct Draft {
    sentences: Vec<String>,
    age_sentence: usize,
    age: u32,
    error: Option<(usize, String, ErrorSlot)>,
}

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).copied().expect("non-empty pool")
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map_or_else(String::new, |f| f.to_uppercase().chain(c).collect())
}

fn draft<R: Rng>(rng: &mut R, flagged: bool) -> Draft {
    let c = &CONDITIONS[rng.gen_range(0..CONDITIONS.len())];
    let female = rng.gen_bool(0.5);
    let name = pick(rng, if female { FEMALE } else { MALE });
    let (he, his, sex) = if female { ("she", "her", "woman") } else { ("he", "his", "man") };
    let age = rng.gen_range(18..90);
    let symptoms = pick(rng, c.symptoms);

    let intro = match rng.gen_range(0..3) {
        0 => format!("{name} is a {age}-year-old {sex} who presented to the {} with {symptoms}.", pick(rng, SETTINGS)),
        1 => format!("A {age}-year-old {sex} named {name} attended the {} reporting {symptoms}.", pick(rng, SETTINGS)),
        _ => format!("{name}, aged {age}, was seen in the {} because of {symptoms}.", pick(rng, SETTINGS)),
    };
    let mut comorb: Vec<&str> = COMORBIDITIES.choose_multiple(rng, 2).copied().collect();
    comorb.sort_unstable();
    let history = match rng.gen_range(0..3) {
        0 => format!("{} past history includes {} and {}.", capitalize(his), comorb[0], comorb[1]),
        1 => format!("{} has a background of {} and {}.", capitalize(he), comorb[0], comorb[1]),
        _ => format!("Comorbidities are {} and {}.", comorb[0], comorb[1]),
    };
    let mut meds: Vec<&str> = REGULAR_MEDS.choose_multiple(rng, 2).copied().collect();
    meds.sort_unstable();
    let medication = match rng.gen_range(0..2) {
        0 => format!("Regular medications include {} and {}.", meds[0], meds[1]),
        _ => format!("{} takes {} and {} regularly.", capitalize(he), meds[0], meds[1]),
    };
    let allergy = match rng.gen_range(0..3) {
        0 => "No known drug allergies were recorded.".to_string(),
        1 => format!("{} reports an allergy to {}.", capitalize(he), pick(rng, ALLERGENS)),
        _ => format!("{} allergy to {} causes a rash.", capitalize(his), pick(rng, ALLERGENS)),
    };
    let onset = format!(
        "Symptoms started {} days ago {}.",
        rng.gen_range(1..15),
        pick(rng, ONSET_CONTEXT)
    );
    let (t, p, sbp, dbp) = (
        format!("{}.{}", rng.gen_range(36..40), rng.gen_range(0..10)),
        rng.gen_range(55..125),
        rng.gen_range(95..175),
        rng.gen_range(55..100),
    );
    let vitals = match rng.gen_range(0..3) {
        0 => format!("Temperature was {t} degrees, pulse {p} beats per minute and blood pressure {sbp}/{dbp} mmHg."),
        1 => format!("Observations showed a heart rate of {p}, blood pressure of {sbp}/{dbp} and temperature of {t}."),
        _ => format!("On arrival {his} pulse was {p} and {his} blood pressure {sbp}/{dbp}, with a temperature of {t}."),
    };
    let exam = match rng.gen_range(0..2) {
        0 => format!("Examination revealed {}.", pick(rng, c.exam)),
        _ => format!("On examination there was {}.", pick(rng, c.exam)),
    };
    let social = format!(
        "{} works as a {}, {} and drinks {} units of alcohol a week.",
        capitalize(he),
        pick(rng, JOBS),
        pick(rng, &["does not smoke", "smokes ten cigarettes a day", "is an ex-smoker", "has never smoked"]),
        rng.gen_range(0..25)
    );
    let investigation = |w: &str| format!("{} {}.", c.test, c.result.replace("{}", w));
    let dx_variant = rng.gen_range(0..3);
    let diagnosis = |w: &str| match dx_variant {
        0 => format!("The most likely diagnosis is {w}."),
        1 => format!("The findings are consistent with {w}."),
        _ => format!("{} was diagnosed with {w}.", capitalize(he)),
    };
    let dose = pick(rng, c.dose);
    let tx_variant = rng.gen_range(0..2);
    let treatment = |w: &str| match tx_variant {
        0 => format!("{} was started on {w} {dose}.", capitalize(he)),
        _ => format!("Treatment was commenced with {w} {dose}."),
    };
    let follow = format!("Follow-up was arranged with {} in {} weeks.", pick(rng, CLINICS), rng.gen_range(1..9));

    // Background sentences in random order and subset; the clinical core
    // (investigation, diagnosis, treatment) keeps its order.
    let mut background = vec![history, vitals, exam];
    for (extra, p) in [(onset, 0.5), (medication, 0.5), (allergy, 0.4), (social, 0.5)] {
        if rng.gen_bool(p) {
            background.push(extra);
        }
    }
    background.shuffle(rng);
    let mut sentences = vec![intro];
    sentences.append(&mut background);
    let inv_at = sentences.len();
    sentences.push(investigation(c.result_word));
    let dx_at = sentences.len();
    sentences.push(diagnosis(c.dx));
    let tx_at = sentences.len();
    sentences.push(treatment(c.drug));
    if rng.gen_bool(0.6) {
        sentences.push(follow);
    }

    let error = flagged.then(|| {
        let slot = [ErrorSlot::Investigation, ErrorSlot::Diagnosis, ErrorSlot::Treatment][rng.gen_range(0..3)];
        let (at, wrong) = match slot {
            ErrorSlot::Investigation => (inv_at, investigation(c.result_wrong)),
            ErrorSlot::Diagnosis => (dx_at, diagnosis(c.dx_wrong)),
            ErrorSlot::Treatment => (tx_at, treatment(c.drug_wrong)),
        };
        let correct = std::mem::replace(&mut sentences[at], wrong);
        (at, correct, slot)
    });
    Draft { sentences, age_sentence: 0, age, error }
}

fn assemble<R: Rng>(rng: &mut R, text_id: String, d: &Draft, shuffle: bool) -> ClinicalRecord {
    let mut labels: Vec<u32> = (0..d.sentences.len() as u32).collect();
    if shuffle {
        labels.shuffle(rng);
    }
    let numbered: Vec<IndexedSentence> = d
        .sentences
        .iter()
        .zip(&labels)
        .map(|(s, &i)| IndexedSentence { declared_index: i, body: s.clone(), char_span: 0..0 })
        .collect();
    // Re-parse the rendered field so spans match what ingestion would produce.
    let indexed_sentences =
        parse_numbered_sentences(&render_numbered_sentences(&numbered)).expect("generated sentences parse");
    let text = d.sentences.join(" ");
    let (gold_flag, gold_error_index, gold_corrected_sentence, gold_corrected_text) = match &d.error {
        Some((at, correct, _)) => {
            let mut fixed = d.sentences.clone();
            fixed[*at] = correct.clone();
            (true, i64::from(labels[*at]), correct.clone(), fixed.join(" "))
        }
        None => (false, -1, NA.to_string(), text.clone()),
    };
    ClinicalRecord {
        text_id,
        text,
        indexed_sentences,
        gold_flag: Some(gold_flag),
        gold_error_index: Some(gold_error_index),
        gold_corrected_sentence: Some(gold_corrected_sentence),
        gold_corrected_text: Some(gold_corrected_text),
    }
}

fn with_age(d: &Draft, rng: &mut impl Rng) -> Draft {
    let mut age = d.age;
    while age == d.age {
        age = rng.gen_range(18..90);
    }
    let mut sentences = d.sentences.clone();
    let s = &mut sentences[d.age_sentence];
    *s = s.replacen(&d.age.to_string(), &age.to_string(), 1);
    Draft { sentences, age_sentence: d.age_sentence, age, error: d.error.clone() }
}

/// Generates the train and test splits. Same config, same corpus.
pub fn generate(config: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let flag_p = config.flagged_fraction.clamp(0.0, 1.0);
    let mut train_drafts = Vec::with_capacity(config.n_train);
    let mut train = Vec::with_capacity(config.n_train);
    let mut train_labels = Vec::with_capacity(config.n_train);
    for i in 0..config.n_train {
        let flagged = rng.gen_bool(flag_p);
        let d = draft(&mut rng, flagged);
        let id = format!("synth-train-{i:04}");
        train.push(assemble(&mut rng, id.clone(), &d, config.shuffle_indices));
        train_labels.push(SynthLabel {
            text_id: id,
            error_slot: d.error.as_ref().map(|e| e.2),
            near_duplicate_of: None,
            expected_extractive: false,
        });
        train_drafts.push(d);
    }

    let n_dup = if config.n_train == 0 {
        0
    } else {
        ((config.n_test as f64) * config.near_duplicate_fraction.clamp(0.0, 1.0)).round() as usize
    };
    let mut kinds: Vec<bool> = (0..config.n_test).map(|i| i < n_dup).collect();
    kinds.shuffle(&mut rng);
    let mut test = Vec::with_capacity(config.n_test);
    let mut test_labels = Vec::with_capacity(config.n_test);
    for (i, dup) in kinds.into_iter().enumerate() {
        let id = format!("synth-test-{i:04}");
        let (d, source) = if dup {
            let j = rng.gen_range(0..train_drafts.len());
            (with_age(&train_drafts[j], &mut rng), Some(j))
        } else {
            let flagged = rng.gen_bool(flag_p);
            (draft(&mut rng, flagged), None)
        };
        test.push(assemble(&mut rng, id.clone(), &d, config.shuffle_indices));
        test_labels.push(SynthLabel {
            text_id: id,
            error_slot: d.error.as_ref().map(|e| e.2),
            near_duplicate_of: source.map(|j| train[j].text_id.clone()),
            expected_extractive: source.is_some_and(|_| d.error.is_some()),
        });
    }
    SynthCorpus { train, test, train_labels, test_labels }
}
