//! The time-dependent covariate table decoder must never panic, whatever
//! the table holds. A fixed valid subjects table isolates this surface; a
//! fuzz-derived one exercises the id cross-checks.

#![no_main]

use libfuzzer_sys::fuzz_target;
use ordaipw::io::{read_observed_str, IngestOptions};

const SUBJECTS: &str = "id,arm,u,delta,cat,ctime,x1\n\
                        s1,0,90,1,2,120,0.4\n\
                        s2,1,35,0,,35,-1.1\n\
                        s3,0,18,1,6,80,0.0\n\
                        s4,1,90,1,1,95,2.5\n";

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = read_observed_str(SUBJECTS, Some(text), &IngestOptions::default());

    // Second pass: the input supplies both tables, split at the first
    // blank line, so subject ids seen by the path reader are adversarial
    // too.
    if let Some((subj, tdc)) = text.split_once("\n\n") {
        let _ = read_observed_str(subj, Some(tdc), &IngestOptions::default());
    }
});
