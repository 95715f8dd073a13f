# qmle backend package
