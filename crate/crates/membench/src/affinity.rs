//! Thread-to-CPU pinning, Linux only. Callers treat failure as a warning and
//! keep going unpinned; a benchmark that refuses to run is worse than one
//! that runs with a caveat attached.

#[cfg(target_os = "linux")]
pub(crate) fn pin_current_thread(cpus: &[usize]) -> Result<(), String> {
    if cpus.is_empty() {
        return Err("empty cpu set".to_string());
    }
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_ZERO(&mut set);
        for &cpu in cpus {
            if cpu >= libc::CPU_SETSIZE as usize {
                return Err(format!("cpu {cpu} outside CPU_SETSIZE"));
            }
            libc::CPU_SET(cpu, &mut set);
        }
        // pid 0 means the calling thread.
        if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) != 0 {
            return Err(std::io::Error::last_os_error().to_string());
        }
    }
    Ok(())
}

#[cfg(not(target_os = "linux"))]
pub(crate) fn pin_current_thread(_cpus: &[usize]) -> Result<(), String> {
    Err("thread pinning is not supported on this platform".to_string())
}

/// Parses a kernel-style cpu list: `0-3,8,10-11`.
pub(crate) fn parse_cpu_list(text: &str) -> Result<Vec<usize>, String> {
    let mut cpus = Vec::new();
    for part in text.trim().split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        match part.split_once('-') {
            Some((lo, hi)) => {
                let lo: usize = lo.trim().parse().map_err(|_| format!("bad cpu range {part:?}"))?;
                let hi: usize = hi.trim().parse().map_err(|_| format!("bad cpu range {part:?}"))?;
                if lo > hi {
                    return Err(format!("bad cpu range {part:?}"));
                }
                cpus.extend(lo..=hi);
            }
            None => cpus.push(part.parse().map_err(|_| format!("bad cpu id {part:?}"))?),
        }
    }
    if cpus.is_empty() {
        return Err("empty cpu list".to_string());
    }
    Ok(cpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cpu_list_grammar() {
        assert_eq!(parse_cpu_list("0-3,8,10-11").unwrap(), vec![0, 1, 2, 3, 8, 10, 11]);
        assert_eq!(parse_cpu_list("5").unwrap(), vec![5]);
        assert!(parse_cpu_list("3-1").is_err());
        assert!(parse_cpu_list("").is_err());
        assert!(parse_cpu_list("a-b").is_err());
    }

    #[cfg(target_os = "linux")]
    #[test]
    fn pinning_to_current_cpu_succeeds() {
        // CPU 0 exists on any Linux host we run tests on.
        pin_current_thread(&[0]).expect("pin to cpu 0");
    }
}
