# Initial tests package marker
