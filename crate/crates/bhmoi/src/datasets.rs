//! Bundled example datasets.

use crate::bhm::BinaryTrialData;

/// Phase II imatinib basket trial across ten advanced-sarcoma subtypes:
/// responses out of patients enrolled, per subtype. Observed rates range
/// from 0% to 24%, with a plausible responsive pocket (leiomyosarcoma,
/// liposarcoma, osteosarcoma) that makes the set a good borrowing example.
pub fn sarcoma() -> BinaryTrialData {
    let labels = [
        "angiosarcoma",
        "ewing_sarcoma",
        "fibrosarcoma",
        "leiomyosarcoma",
        "liposarcoma",
        "malignant_fibrous_histiocytoma",
        "osteosarcoma",
        "nerve_sheath_tumor",
        "rhabdomyosarcoma",
        "synovial_sarcoma",
    ];
    let responses = vec![2, 0, 1, 6, 7, 3, 5, 1, 0, 3];
    let sizes = vec![15, 3, 12, 28, 29, 29, 26, 5, 2, 20];
    BinaryTrialData::new(labels.iter().map(|s| s.to_string()).collect(), responses, sizes)
        .expect("static dataset is valid")
}

/// Ten-subgroup demonstration fixture: a gradient of response counts out
/// of 25 patients each, separating into low / medium / high tiers under
/// default clustering settings.
pub fn demo_counts() -> BinaryTrialData {
    BinaryTrialData::from_counts(vec![2, 3, 5, 6, 8, 6, 9, 11, 13, 7], vec![25; 10])
        .expect("static dataset is valid")
}
